"""Print the canonical structure of the exam model: variable resolutions,
finite-population group resolutions for a 10,10,10 design and the
resolved uncertainty per canonical variable."""
import numpy as np

from coexchange.exam import EXAM_POPULATIONS, exam_model
from coexchange.groups import average_fraction_identity, group_structure, resolved_uncertainty_t
from coexchange.model import Design
from coexchange.variables import canonical_variables


def main():
    spec = exam_model(EXAM_POPULATIONS)
    design = Design((10, 10, 10))
    cv = canonical_variables(spec)
    np.set_printoptions(precision=4, suppress=True)
    print("variable resolutions phi:", cv.phi)
    print(f"{'t':>2} {'shortcut':>16}  lambda (finite)          RU trace   RU fractions")
    for t in range(spec.v0):
        gs = group_structure(spec, design, t, "finite", cv)
        ru = resolved_uncertainty_t(spec, design, t, "finite")
        alt = average_fraction_identity(spec, design, t)
        print(f"{t + 1:>2} {gs.shortcut:>16}  {np.array2string(gs.lam):<24} {ru:.7f}  {alt:.7f}")


if __name__ == "__main__":
    main()
