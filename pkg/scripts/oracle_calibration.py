"""Check the synthetic oracle's spread against repeated draws.

Regenerates one spec under many seeds, runs plain and corrected matching in
memory, and compares the empirical spread of pct_change with the oracle's
delta-method standard deviation.

    python3 scripts/oracle_calibration.py --seeds 30
"""

import argparse
import json
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from geodisp.matching import evaluate_dataset, flatten
from geodisp.metrics import class_criterion_metrics
from geodisp.synth import SynthSpec, generate_records, oracle_metrics

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from test_acceptance import SYMMETRIC  # noqa: E402


def run_once(spec: SynthSpec, cls: str) -> float:
    data = generate_records(spec)
    where = {t.image_id: t.continent for t in data.geo}
    plain = flatten(evaluate_dataset(data.gt, data.predictions, "mask"))
    corr = flatten(evaluate_dataset(data.gt, data.predictions, "mask", relabel=spec.policy()))
    return class_criterion_metrics(plain, corr, where, [cls], "mask")[cls]["pct_change"]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--spec", help="synth spec JSON (defaults to the symmetric-confusion acceptance spec)")
    ap.add_argument("--cls", default="bus")
    args = ap.parse_args(argv)

    doc = json.loads(Path(args.spec).read_text()) if args.spec else SYMMETRIC
    base = SynthSpec.from_dict(doc)
    oracle = oracle_metrics(base)[args.cls]["pct_change"]
    values = [run_once(replace(base, rng_seed=s), args.cls) for s in range(args.seeds)]
    mean, sd = statistics.fmean(values), statistics.stdev(values)
    print(f"oracle pct {oracle.value:.3f}, tolerance {oracle.tol:.3f}")
    print(f"empirical over {len(values)} seeds: mean {mean:.3f}, sd {sd:.3f}, "
          f"min {min(values):.3f}, max {max(values):.3f}")
    inside = sum(oracle.holds(v) for v in values)
    print(f"{inside}/{len(values)} draws inside the oracle tolerance")
    return 0


if __name__ == "__main__":
    sys.exit(main())
