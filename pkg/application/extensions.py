import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from rich.console import Console
from rich.logging import RichHandler

T = TypeVar("T")
R = TypeVar("R")

# Log records and error responses go to stderr; command results to stdout
console = Console(stderr=True, highlight=False)
output = Console(highlight=False)


def init_logging(level: str = "INFO"):
    """Route every package logger through a single rich handler"""
    root = logging.getLogger("application")
    root.handlers.clear()
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(level.upper())
    root.propagate = False
    return root


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Map fn over items with up to `threads` workers; results keep input order"""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
