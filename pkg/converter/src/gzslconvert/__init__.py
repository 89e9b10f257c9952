from .convert import ConvertError, SourceArchivePair, convert, fnv1a64_hex

__version__ = "0.1.0"
