"""
Regenerates the bundled trace samples under data/samples/.

stable_3d.csv holds hand-picked traces that satisfy the 3D stability condition with δ0 = 0.1
(incompressible and compressible rows); kelvin_helmholtz.csv holds field-free traces with a
velocity jump. `--random N` appends N admissible random traces drawn with the given seed.
"""

import argparse
import os
import sys

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.ingestion import write_trace_csv  # noqa: E402
from src.stability import TwoPhaseTrace, check_stability_3d, sample_traces_3d  # noqa: E402
from utils.logger import setup_logger  # noqa: E402

logger = setup_logger("generate_samples")

DELTA0 = 0.1
INF = np.inf

# rho+, rho-, v+, v-, b+, b-, cs+, cs-
STABLE_ROWS = [
    (1.0, 1.0, (0.25, 0.25), (-0.25, -0.25), (1.0, 0.0), (0.0, 1.0), INF, INF),
    (2.0, 1.0, (0.4, 0.1), (-0.2, 0.1), (1.0, 1.0), (1.0, -1.0), INF, INF),
    (1.0, 1.0, (0.1, -0.2), (-0.2, 0.2), (1.5, 0.0), (0.0, 1.2), 2.0, 3.0),
    (0.8, 1.5, (0.15, 0.1), (-0.15, -0.1), (0.6, 0.8), (-0.8, 0.6), INF, INF),
    (1.2, 1.2, (-0.2, 0.15), (0.2, -0.15), (1.0, 0.2), (-0.3, 1.0), INF, INF),
    (1.0, 2.0, (0.2, -0.1), (-0.1, 0.2), (0.0, 1.0), (1.0, 0.5), 4.0, 1.5),
]

KH_ROWS = [
    (1.0, 1.0, (0.5, 0.0), (-0.5, 0.0), (0.0, 0.0), (0.0, 0.0), INF, INF),
    (1.0, 2.0, (0.3, 0.4), (-0.2, 0.0), (0.0, 0.0), (0.0, 0.0), INF, INF),
    (1.5, 1.0, (0.2, -0.1), (-0.2, 0.1), (0.0, 0.0), (0.0, 0.0), 3.0, 3.0),
]


def rows_to_trace(rows) -> TwoPhaseTrace:
    col = lambda i: np.array([r[i] for r in rows], dtype=float)
    vec = lambda i: np.array([r[i] for r in rows], dtype=float).T
    return TwoPhaseTrace.from_arrays(col(0), col(1), vec(2), vec(3), vec(4), vec(5), col(6), col(7))


def concat(a: TwoPhaseTrace, b: TwoPhaseTrace) -> TwoPhaseTrace:
    join = lambda x, y, axis: np.concatenate([x, y], axis=axis)
    return TwoPhaseTrace.from_arrays(join(a.rho_plus, b.rho_plus, 0), join(a.rho_minus, b.rho_minus, 0),
                                     join(a.v_plus, b.v_plus, 1), join(a.v_minus, b.v_minus, 1),
                                     join(a.b_plus, b.b_plus, 1), join(a.b_minus, b.b_minus, 1),
                                     join(a.cs_plus, b.cs_plus, 0), join(a.cs_minus, b.cs_minus, 0))


def main():
    parser = argparse.ArgumentParser(description="Regenerate bundled trace samples")
    parser.add_argument("--out", default="data/samples")
    parser.add_argument("--random", type=int, default=0, help="Admissible random traces appended to stable_3d.csv")
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    stable = rows_to_trace(STABLE_ROWS)
    if args.random:
        stable = concat(stable, sample_traces_3d(np.random.default_rng(args.seed), args.random, DELTA0))
    report = check_stability_3d(stable, DELTA0)
    if not report.holds:
        raise SystemExit(f"stable sample violates the condition: {report.to_dict()}")
    write_trace_csv(stable, os.path.join(args.out, "stable_3d.csv"))
    write_trace_csv(rows_to_trace(KH_ROWS), os.path.join(args.out, "kelvin_helmholtz.csv"))
    logger.info(f"Wrote {stable.rho_plus.size} stable and {len(KH_ROWS)} Kelvin-Helmholtz traces to {args.out} "
                f"(margins {report.margin_upper:.3g}, {report.margin_lower:.3g})")


if __name__ == "__main__":
    main()
