"""Regenerate the pinned CLI outputs under tests/golden/.

Run after an intentional change to report formatting or sampling, then
review the diff before committing.
"""

import contextlib
import io
from pathlib import Path

from dtadag.cli import main
from dtadag.scenarios import builtin_scenarios

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"

CASES = {
    "demo_all.txt": ["demo", "--all"],
    "demo_all.json": ["demo", "--all", "--format", "json"],
    **{
        f"simulate_{s.name}_n1000_seed7.csv": ["simulate", s.name, "--n", "1000", "--seed", "7"]
        for s in builtin_scenarios()
    },
}


def run(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


if __name__ == "__main__":
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for name, argv in CASES.items():
        code, text = run(argv)
        if code != 0:
            raise SystemExit(f"{' '.join(argv)} exited {code}")
        (GOLDEN / name).write_bytes(text.encode("utf-8"))
        print(f"wrote {name} ({len(text)} bytes)")
