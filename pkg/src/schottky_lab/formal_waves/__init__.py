"""Rational wave series, pseudo-differential operators and their identities."""
