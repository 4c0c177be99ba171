import logging

from app.core.config import RunConfig
from app.core.settings import EXIT_OK
from app.services import clifford, storage
from app.services import discrete_operators as ops
from app.services.model_spectra import (
    CircleGeometry,
    FiberModel,
    circle_hodge_spectrum,
    fiber_witten_spectrum,
    holonomy_twisted_spectrum,
    product_spectrum,
)

log = logging.getLogger(__name__)


def cmd_spectrum(cfg: RunConfig, args=None) -> int:
    """Spectrum CSVs for base, fiber and product (plus the twisted product when α ≠ 0)."""
    g, d = cfg.geometry, cfg.discretization
    out_dir = storage.ensure_storage(cfg.output.dir)
    circle = CircleGeometry(g.L)
    fiber = FiberModel(g.k, g.tau, d.cutoff)

    base = circle_hodge_spectrum(circle, d.max_mode)
    fib = fiber_witten_spectrum(fiber)
    written = [
        storage.write_spectrum_csv(out_dir, "base", base),
        storage.write_spectrum_csv(out_dir, "fiber", fib),
        storage.write_spectrum_csv(out_dir, "product", product_spectrum(base, fib)),
    ]
    if g.alpha:
        twisted = holonomy_twisted_spectrum(circle, fiber, g.alpha, min(d.max_mode, 150))
        written.append(storage.write_spectrum_csv(out_dir, "twisted", twisted))

    # operators behind the spectra
    complex = ops.build_circle_complex(ops.make_circle_grid(d.N, g.L))
    storage.write_coo_matrix(out_dir, "circle_d0", complex.d0, {"N": d.N, "L": g.L, "maps": "0->1"})
    storage.write_coo_matrix(out_dir, "circle_dirac", complex.dirac, {"N": d.N, "L": g.L}, complex.degrees)
    fiber_op = ops.build_fiber_operator(FiberModel(g.k, g.tau), d.fiber_basis)
    storage.write_coo_matrix(out_dir, "fiber_dirac", fiber_op.dirac,
                             {"k": g.k, "tau": g.tau, "basis_size": d.fiber_basis}, fiber_op.degrees)
    storage.write_operator_debug(out_dir, "clifford_c_e1", clifford.clifford_left(clifford.AlgebraShape(1, g.k), "e1"))

    log.info("spectrum: wrote %d spectra to %s", len(written), out_dir)
    print(f"spectrum: {len(written)} files in {out_dir}")
    return EXIT_OK
