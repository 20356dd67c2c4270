from __future__ import annotations

import os
import sys
import threading
from datetime import datetime

__all__ = ["console"]


def _enable_windows_ansi() -> None:
    if os.name != "nt":
        return
    try:
        import ctypes
        kernel32 = ctypes.windll.kernel32
        handle = kernel32.GetStdHandle(-11)
        mode = ctypes.c_uint32()
        if kernel32.GetConsoleMode(handle, ctypes.byref(mode)):
            ENABLE_VIRTUAL_TERMINAL_PROCESSING = 0x0004
            kernel32.SetConsoleMode(handle, mode.value | ENABLE_VIRTUAL_TERMINAL_PROCESSING)
    except Exception:
        pass


class _Style:
    RESET = "\x1b[0m"
    BOLD = "\x1b[1m"
    DIM = "\x1b[2m"

    FG = {
        "red": "\x1b[31m",
        "green": "\x1b[32m",
        "yellow": "\x1b[33m",
        "blue": "\x1b[34m",
        "magenta": "\x1b[35m",
        "cyan": "\x1b[36m",
        "white": "\x1b[37m",
        "gray": "\x1b[90m",
    }


def _supports_color() -> bool:
    if os.getenv("NO_COLOR"):
        return False
    if os.getenv("TERM") == "dumb":
        return False
    try:
        return sys.stderr.isatty()
    except Exception:
        return False


_enable_windows_ansi()
_USE_COLOR = _supports_color()


def _c(text: str, color: str | None = None, *, bold: bool = False, dim: bool = False) -> str:
    if not _USE_COLOR:
        return text
    parts = []
    if bold:
        parts.append(_Style.BOLD)
    if dim:
        parts.append(_Style.DIM)
    if color:
        parts.append(_Style.FG.get(color, ""))
    parts.append(text)
    parts.append(_Style.RESET)
    return "".join(parts)


class Console:
    """
    Console helper shared by every command:
      - Colorized, consistent prefix: "[cpolab]"
      - Section headers & ruled lines
      - Progress line for sweeps
    Messages go to stderr so data written to stdout stays clean.
    """
    def __init__(self) -> None:
        self.quiet = bool(os.getenv("CPOLAB_QUIET"))
        self._lock = threading.Lock()
        self.set_theme(os.getenv("CPOLAB_THEME", "current"))

    def _out(self, msg: str) -> None:
        if self.quiet:
            return
        with self._lock:
            print(msg, file=sys.stderr)

    def _retro(self, marker: str, msg: str) -> None:
        if _USE_COLOR:
            self._out(f"\x1b[32m{self.prefix_raw} {marker} {msg}\x1b[0m")
        else:
            self._out(f"{self.prefix_raw} {marker} {msg}")

    def info(self, msg: str) -> None:
        if self.theme == "retro":
            self._out(f"\x1b[32m{self.prefix_raw} {msg}\x1b[0m" if _USE_COLOR else f"{self.prefix_raw} {msg}")
            return
        self._out(f"{self.prefix_colored} {msg}")

    def success(self, msg: str) -> None:
        if self.theme == "retro":
            self._retro("[SUCCESS]", msg)
            return
        self._out(f"{self.prefix_colored} {_c('✔', 'green', bold=True)} {msg}")

    def warn(self, msg: str) -> None:
        if self.theme == "retro":
            self._retro("[WARN]", msg)
            return
        self._out(f"{self.prefix_colored} {_c('▲', 'yellow', bold=True)} {msg}")

    def error(self, msg: str) -> None:
        if self.theme == "retro":
            self._retro("[ERROR]", msg)
            return
        self._out(f"{self.prefix_colored} {_c('✖', 'red', bold=True)} {msg}")

    def tip(self, msg: str) -> None:
        if self.theme == "retro":
            self._retro("[TIP]", msg)
            return
        self._out(f"{self.prefix_colored} {_c('➤', 'magenta', bold=True)} {msg}")

    def hr(self, title: str | None = None) -> None:
        width = 80
        line = "─" * width
        if title:
            t = f" {title} "
            line = f"{t}{'─' * max(0, width - len(t))}"
        self._out(_c(line, "gray"))

    def section(self, title: str, *, timestamp: bool = True) -> None:
        text = f"{title} @ {datetime.now().strftime('%H:%M:%S')}" if timestamp else title
        if self.theme in ("neon", "retro"):
            width = 80
            edge, side = ("═", "║") if self.theme == "neon" else ("-", "|")
            corners = ("╔", "╗", "╚", "╝") if self.theme == "neon" else ("+", "+", "+", "+")
            self._out(corners[0] + edge * (width - 2) + corners[1])
            self._out(side + text.center(width - 2) + side)
            self._out(corners[2] + edge * (width - 2) + corners[3])
            return
        self.hr()
        self._out(f"{self.prefix_colored} {_c(text, 'white', bold=True)}")
        self.hr()

    def progress(self, done: int, total: int, prefix: str = "Progress", bar_length: int = 40) -> None:
        """Redraw a progress bar for `done` of `total` finished items."""
        if self.quiet:
            return
        total = max(total, 1)
        filled = int(bar_length * done / total)
        bar = "█" * filled + "-" * (bar_length - filled)
        line = f"{prefix}: |{bar}| {int(100 * done / total)}%"
        with self._lock:
            sys.stderr.write("\r" + line)
            if done >= total:
                sys.stderr.write("\n")
            sys.stderr.flush()

    def set_theme(self, theme: str) -> None:
        """Switch the console output theme on the fly."""
        self.theme = theme.lower()
        if self.theme == "neon":
            self.prefix_raw = "[CPOLAB]"
            self.prefix_colored = "\x1b[95;1m[\x1b[96;1mCPOLAB\x1b[95;1m]\x1b[0m" if _USE_COLOR else "[CPOLAB]"
        elif self.theme == "retro":
            self.prefix_raw = "[CPOLAB]"
            self.prefix_colored = "\x1b[92;1m[CPOLAB]\x1b[0m" if _USE_COLOR else "[CPOLAB]"
        else:
            self.prefix_raw = "[cpolab]"
            self.prefix_colored = _c(self.prefix_raw, "cyan", bold=True)


console = Console()