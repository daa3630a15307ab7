"""Write the example model files and a synthetic raw-data CSV for the exam model."""
import argparse
from pathlib import Path

import numpy as np

from coexchange.exam import EXAM_POPULATIONS, exam_model
from coexchange.io import dump_model, write_raw_data
from coexchange.model import Design
from coexchange.oracle import synthetic_data


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default=Path(__file__).resolve().parent.parent / "data", type=Path)
    p.add_argument("--design", default="10,10,10")
    p.add_argument("--seed", type=int, default=2024)
    args = p.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    spec = exam_model(EXAM_POPULATIONS)
    dump_model(spec, args.out_dir / "exam.json")
    dump_model(exam_model(), args.out_dir / "exam_infinite.json")
    design = Design(tuple(int(x) for x in args.design.split(",")))
    obs = synthetic_data(np.random.default_rng(args.seed), spec, design, "finite")
    write_raw_data(args.out_dir / "exam_scripts.csv", spec, obs)
    print(f"wrote models and {design.total} scripts to {args.out_dir}")


if __name__ == "__main__":
    main()
