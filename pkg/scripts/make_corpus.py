#!/usr/bin/env python3
"""Regenerate the bundled release corpus (12 programs, pinned seeds).

The corpus ships as package data so test runs need no generator step; rerun
this script only when the generator or the release specs change.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from gadgetfuzz.bench import release_specs, write_corpus

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "gadgetfuzz" / "data" / "corpus"


def main() -> None:
    names = write_corpus(release_specs(), OUT)
    for name in names:
        print(f"wrote {name}")
    print(f"{len(names)} programs -> {OUT}")


if __name__ == "__main__":
    main()
