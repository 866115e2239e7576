"""
Container entrypoint: batch CLI vs scoring service.

Selects the mode from the JOB_MODE environment variable:
  - (unset) or "cli" → runs src.cli with the container arguments and exits.
  - "service"        → starts the FastAPI scoring service (uvicorn) on $PORT (default 8080).

Same image for both; trials and ablations run as batch jobs, the service
only loads a checkpoint (CN_CHECKPOINT_PATH) and scores rows.
"""
import logging
import os
import sys

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def _run_cli() -> int:
    from src.cli import cli_main
    logger.info(f"🚀 JOB_MODE=cli → {' '.join(sys.argv[1:]) or '(no arguments)'}")
    return cli_main(sys.argv[1:])


def _run_service() -> int:
    """Starts the scoring service."""
    import uvicorn
    from src.main import app
    port = int(os.environ.get("PORT", 8080))
    logger.info(f"🚀 JOB_MODE=service → starting uvicorn on port {port}")
    uvicorn.run(app, host="0.0.0.0", port=port)
    return 0


def main() -> int:
    mode = (os.environ.get("JOB_MODE") or "cli").strip().lower()
    dispatch = {
        "cli": _run_cli,
        "service": _run_service,
    }
    handler = dispatch.get(mode)
    if not handler:
        logger.error(f"JOB_MODE='{mode}' not recognised. Options: cli|service")
        return 1
    try:
        return handler() or 0
    except Exception as e:
        logger.exception(f"❌ Failure in mode '{mode}': {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
