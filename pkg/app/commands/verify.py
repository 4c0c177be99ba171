import logging
import sys

from app.core.config import RunConfig, dump_config
from app.core.render import write_summary
from app.core.settings import EXIT_FAILED, EXIT_OK
from app.services import storage
from app.services.verification import ACCEPTANCE_TAGS, run_suite, suite_passed

log = logging.getLogger(__name__)


def run_and_write(cfg: RunConfig, tags, jobs: int, title: str) -> int:
    out_dir = storage.ensure_storage(cfg.output.dir)
    reports = run_suite(cfg, tags, jobs)
    for report in reports:
        storage.write_report(out_dir, report)
    storage.write_json(out_dir / "verdicts.json", {r.tag: r.summary() for r in reports})
    write_summary(out_dir, reports, title=title, context={"config_text": dump_config(cfg)})

    failing = [r.tag for r in reports if r.acceptance and not r.passed]
    if failing:
        print(f"FAILED: {', '.join(failing)}", file=sys.stderr)
    print(f"{title}: {len(reports) - len(failing)}/{len(reports)} reports passed, output in {out_dir}")
    return EXIT_FAILED if failing else EXIT_OK


def cmd_verify(cfg: RunConfig, args=None) -> int:
    tags = getattr(args, "only", None) or ACCEPTANCE_TAGS
    jobs = getattr(args, "jobs", 1) or 1
    return run_and_write(cfg, tags, jobs, "verify")
