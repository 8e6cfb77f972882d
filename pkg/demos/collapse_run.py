"""One inhomogeneous collapse run from a JSON config, with a summary and plot.

Usage: python demos/collapse_run.py [config] [out_dir]

The default config (k1 = k2 = 1, t0 = -0.01, C0 = 0.5) takes about a minute.
"""
import os
import sys

from blowuplab.cli import cmd_run

HERE = os.path.dirname(os.path.abspath(__file__))


def main(config=os.path.join(HERE, "configs", "inhomogeneous_default.json"), out_dir="demo_output/collapse"):
    return cmd_run(config, out_dir)


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
