"""Thread-count policy shared by the Monte Carlo and scan routines."""
import os


def thread_count() -> int:
    """Worker threads, capped by the HYPOPATH_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("HYPOPATH_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1
