"""Toolkit for term conditions in finite idempotent algebras.

Given an algebra as operation tables this package decides whether a
Maltsev term exists and constructs a witness circuit in polynomial
time, decides minority and minority-majority terms at desk scale via
subpower closure, emits subpower-membership instances encoding the
minority question, and builds and verifies a family of algebras that
have local minority terms on every small subset but no global minority
term.
"""

from malcev.algebra import Algebra, Element, OperationTable, ParseError, parse_algebra, serialize_algebra

__all__ = [
    "Algebra",
    "Element",
    "OperationTable",
    "ParseError",
    "parse_algebra",
    "serialize_algebra",
]
