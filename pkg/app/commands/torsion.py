import logging

from app.core.config import RunConfig
from app.core.errors import UnsupportedStructureError
from app.core.settings import EXIT_DISAGREEMENT, EXIT_OK
from app.services import heat_zeta, storage
from app.services import adiabatic_lab as lab
from app.services.verification import geometry_from_config

log = logging.getLogger(__name__)


def _both_methods(spec, tol: float) -> tuple[dict, bool]:
    split, fit = heat_zeta.torsion_from_spectrum(spec)
    out = {"heat_split": split.to_dict(), "fit": fit.to_dict()}
    try:
        closed = heat_zeta.torsion_zeta_closed_form(spec)
    except UnsupportedStructureError as e:
        log.info("closed form unavailable: %s", e)
        return out, True
    out["closed_form"] = closed.to_dict()
    budget = max(tol, split.error_budget + closed.error_budget)
    difference = abs(split.log_torsion - closed.log_torsion)
    out["difference"] = difference
    return out, difference <= budget


def cmd_torsion(cfg: RunConfig, args=None) -> int:
    """ZetaResult JSONs for M and E by both methods and the main-theorem residual."""
    out_dir = storage.ensure_storage(cfg.output.dir)
    geom = geometry_from_config(cfg)
    if geom.twisted:
        geom = geom.twisted_variant(geom.alpha)
    tol = cfg.tolerance("torsion_heat")

    agree = True
    for name, spec in (("M", lab.base_spectrum(geom)), ("E", lab.total_spectrum(geom))):
        result, ok = _both_methods(spec, tol)
        storage.write_json(out_dir / f"torsion_{name}.json", result)
        if not ok:
            log.error("ERROR in torsion: methods disagree on %s by %.3e", name, result["difference"])
        agree &= ok

    point = lab.main_theorem_point(geom)
    storage.write_json(out_dir / "main_theorem.json", {"L": geom.L, "tau": geom.tau, "alpha": geom.alpha, **point})
    print(f"torsion: log T(M) = {point['log_torsion_M']:.12g}, residual = {point['residual']:.3e}")
    return EXIT_OK if agree else EXIT_DISAGREEMENT
