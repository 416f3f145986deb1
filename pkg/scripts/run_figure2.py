"""Quadratic-DGP sweeps: Type-I calibration, gamma, theta and c.

    python scripts/run_figure2.py [--out results] [--jobs N] [--seed S]
"""
from _common import parser, run_config


def main(argv=None):
    args = parser(__doc__.splitlines()[0]).parse_args(argv)
    for name in ("type1", "figure2_plot1", "figure2_plot2", "figure2_plot3"):
        run_config(name, args.out, args.jobs, args.seed)


if __name__ == "__main__":
    main()
