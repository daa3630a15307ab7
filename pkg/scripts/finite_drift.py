"""Track the leading finite-population group direction for one canonical
variable as the balanced sample size approaches the smallest population."""
import argparse

import numpy as np

from coexchange.exam import EXAM_POPULATIONS, exam_model
from coexchange.groups import group_structure
from coexchange.model import Design
from coexchange.variables import canonical_variables


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--t", type=int, default=7, help="1-based canonical variable index")
    p.add_argument("--sizes", default="1,5,10,20,30,40,45,50")
    args = p.parse_args()
    spec = exam_model(EXAM_POPULATIONS)
    cv = canonical_variables(spec)
    print("n,lambda1,v1,v2,v3")
    for n in (int(x) for x in args.sizes.split(",")):
        gs = group_structure(spec, Design((n,) * spec.g0), args.t - 1, "finite", cv)
        v = gs.V[:, 0]
        v = v if v[np.argmax(np.abs(v))] > 0 else -v
        print(f"{n},{gs.lam[0]:.4f}," + ",".join(f"{x:.4f}" for x in v))


if __name__ == "__main__":
    main()
