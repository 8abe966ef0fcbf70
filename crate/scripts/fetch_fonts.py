#!/usr/bin/env python3
"""Fetch open-licensed Tamil fonts from npm (fontsource) and convert them to TTF.

Writes the Tamil-subset regular weight of each family into fonts/ and two
coverage fixtures into fonts/testing/:

  latin-only.ttf   no Tamil glyphs at all
  no-aytham.ttf    every target glyph except U+0B83

Requires npm and fontTools.
"""
import glob
import os
import shutil
import subprocess
import sys
import tarfile
import tempfile

from fontTools import subset
from fontTools.ttLib import TTFont

FAMILIES = [
    "anek-tamil",
    "arima-madurai",
    "baloo-thambi-2",
    "catamaran",
    "coiny",
    "hind-madurai",
    "kavivanar",
    "mukta-malar",
    "noto-sans-tamil",
    "noto-serif-tamil",
    "pavanam",
]

TARGETS = [0x0B83] + list(range(0x0B85, 0x0B8B)) + [0x0B8E, 0x0B8F, 0x0B90, 0x0B92, 0x0B93, 0x0B94]


def unpack(family, work):
    out = subprocess.run(
        ["npm", "pack", f"@fontsource/{family}"], cwd=work, capture_output=True, text=True, check=True
    ).stdout.strip().splitlines()[-1]
    dest = os.path.join(work, family)
    with tarfile.open(os.path.join(work, out)) as tar:
        tar.extractall(dest)
    return os.path.join(dest, "package")


def to_ttf(woff, path):
    font = TTFont(woff)
    font.flavor = None
    font.save(path)


def main():
    root = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fonts")
    testing = os.path.join(root, "testing")
    licenses = os.path.join(root, "licenses")
    for d in (root, testing, licenses):
        os.makedirs(d, exist_ok=True)
    with tempfile.TemporaryDirectory() as work:
        for family in FAMILIES:
            pkg = unpack(family, work)
            woff = os.path.join(pkg, "files", f"{family}-tamil-400-normal.woff")
            to_ttf(woff, os.path.join(root, f"{family}.ttf"))
            lic = os.path.join(pkg, "LICENSE")
            if os.path.exists(lic):
                shutil.copy(lic, os.path.join(licenses, f"{family}.txt"))
            print(family, file=sys.stderr)

        pkg = os.path.join(work, "noto-sans-tamil", "package")
        to_ttf(
            os.path.join(pkg, "files", "noto-sans-tamil-latin-400-normal.woff"),
            os.path.join(testing, "latin-only.ttf"),
        )
        opts = subset.Options()
        opts.notdef_outline = True
        opts.layout_features = []
        font = TTFont(os.path.join(root, "noto-sans-tamil.ttf"))
        sub = subset.Subsetter(opts)
        sub.populate(unicodes=[c for c in TARGETS if c != 0x0B83] + [0x41])
        sub.subset(font)
        font.save(os.path.join(testing, "no-aytham.ttf"))


if __name__ == "__main__":
    main()
