"""High-dimensional toys: LASSO against the minimum-norm interpolator.

    python scripts/run_toys.py [--out results] [--jobs N] [--seed S]
"""
from _common import parser, run_config

MINNORM = {"name": "minnorm"}


def main(argv=None):
    args = parser(__doc__.splitlines()[0]).parse_args(argv)
    run_config("toy_gcm", args.out, args.jobs, args.seed, "toy_gcm_lasso")
    run_config("toy_gcm", args.out, args.jobs, args.seed, "toy_gcm_minnorm",
               models={"gx": MINNORM, "gy": MINNORM})
    run_config("toy_stfr", args.out, args.jobs, args.seed, "toy_stfr_lasso")
    run_config("toy_stfr", args.out, args.jobs, args.seed, "toy_stfr_minnorm", models={"g1": MINNORM})


if __name__ == "__main__":
    main()
