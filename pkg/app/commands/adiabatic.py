from app.core.config import RunConfig
from app.commands.verify import run_and_write
from app.services.verification import EXTRA_TAGS

ADIABATIC_TAGS = ("spectral-gap", "large-time", "mckean-singer", "alpha-form", "fiber-decay") + EXTRA_TAGS


def cmd_adiabatic(cfg: RunConfig, args=None) -> int:
    """Every adiabatic-limit experiment, acceptance and exploratory."""
    tags = getattr(args, "only", None) or ADIABATIC_TAGS
    jobs = getattr(args, "jobs", 1) or 1
    return run_and_write(cfg, tags, jobs, "adiabatic")
