from .lexer import Token, tokenize
from .parser import parse
from .printer import pretty_print

__all__ = ["Token", "tokenize", "parse", "pretty_print"]
