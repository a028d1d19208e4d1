#!/usr/bin/env python3
"""Writes core/src/unicode_tables.inc: code point ranges matching Python's
re character classes \\w, \\d and \\s for str patterns."""
import pathlib
import sys
import unicodedata


def ranges(pred):
    out, start = [], None
    for cp in range(sys.maxunicode + 2):
        hit = cp <= sys.maxunicode and pred(chr(cp))
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    return out


def emit(name, rs):
    body = ",\n".join(f"    {{0x{a:X}, 0x{b:X}}}" for a, b in rs)
    return f"inline constexpr CodeRange {name}[] = {{\n{body},\n}};\n"


target = pathlib.Path(__file__).resolve().parent.parent / "core" / "src" / "unicode_tables.inc"
text = (f"// Generated by scripts/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}).\n"
        + emit("kWordRanges", ranges(lambda c: c.isalnum() or c == "_"))
        + emit("kDigitRanges", ranges(str.isdecimal))
        + emit("kSpaceRanges", ranges(str.isspace)))
target.write_text(text, encoding="utf-8")
