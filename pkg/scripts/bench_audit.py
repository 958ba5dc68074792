"""Time a full audit on a synthetic dataset at several worker counts and
confirm metrics.json is byte-identical across them.

    python3 scripts/bench_audit.py --instances 417 --threads 1 2 4
"""

import argparse
import hashlib
import sys
import tempfile
import time
from pathlib import Path

from geodisp import cli
from geodisp.synth import SynthSpec, generate


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=417, help="per (continent, class); 4 classes")
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--seed", type=int, default=88)
    args = ap.parse_args(argv)

    spec = SynthSpec.from_dict({
        "rng_seed": args.seed,
        "classes": ["person", "rider", "car", "bus"],
        "instances": args.instances,
        "confusion": {"*": {"bus": {"bus": 0.7, "car": 0.3}, "rider": {"rider": 0.8, "person": 0.2}}},
        "localization": {"person": {"base_iou": 0.7, "jitter": 0.2}},
        "miss_rate": 0.05,
    })
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        t0 = time.perf_counter()
        generate(spec, root)
        n = sum(1 for _ in open(root / "gt.jsonl"))
        print(f"generated {n} GT instances in {time.perf_counter() - t0:.1f}s")
        digests = set()
        for k in args.threads:
            t0 = time.perf_counter()
            code = cli.main(["audit", "-c", str(root / "config.json"), "--threads", str(k),
                             "--output-dir", str(root / f"report{k}")])
            if code:
                return code
            digest = hashlib.sha256((root / f"report{k}" / "metrics.json").read_bytes()).hexdigest()
            digests.add(digest)
            print(f"threads={k}: {time.perf_counter() - t0:.1f}s  metrics.json sha256 {digest[:16]}")
        print("identical across thread counts" if len(digests) == 1 else "MISMATCH across thread counts")
        return 0 if len(digests) == 1 else 1


if __name__ == "__main__":
    sys.exit(main())
