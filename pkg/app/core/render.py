from jinja2 import Environment, FileSystemLoader, StrictUndefined

from app.core.settings import SUMMARY_FILE, SUMMARY_TEMPLATE, TEMPLATES_DIR

templates = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)
templates.filters["num"] = lambda value: format(float(value), ".6g")


def render_summary(reports, title: str = "Verification summary", context: dict | None = None) -> str:
    """Markdown summary of a list of ExperimentReports."""
    ctx = {
        "title": title,
        "reports": list(reports),
        "acceptance": [r for r in reports if r.acceptance],
        "extras": [r for r in reports if not r.acceptance],
        "passed": all(r.passed for r in reports if r.acceptance),
    }
    ctx.update(context or {})
    return templates.get_template(SUMMARY_TEMPLATE).render(**ctx)


def write_summary(out_dir, reports, **kwargs):
    path = out_dir / SUMMARY_FILE
    path.write_text(render_summary(reports, **kwargs), encoding="utf-8")
    return path
