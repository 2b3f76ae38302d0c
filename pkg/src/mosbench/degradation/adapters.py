"""Run external codec / enhancement tools on a clip through WAV files."""
from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
from pathlib import Path

from ..core import AdapterError, Clip, DataIOError, Step, ValidationError
from ..io import load_audio, save_audio

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0


def build_command(template: str, in_path: str, out_path: str) -> list[str]:
    """Split ``template`` shell-style and substitute ``{in}`` / ``{out}`` in each argument."""
    if "{in}" not in template or "{out}" not in template:
        raise ValidationError(f"adapter template must contain {{in}} and {{out}}: {template!r}")
    return [
        arg.replace("{in}", in_path).replace("{out}", out_path)
        for arg in shlex.split(template)
    ]


def run_external_adapter(clip: Clip, template: str, timeout: float = DEFAULT_TIMEOUT,
                         name: str = "adapter") -> Clip:
    """Write ``clip`` to a temp WAV, run the command, and load what it wrote.

    The output sample rate is taken from the produced file as-is.
    """
    with tempfile.TemporaryDirectory(prefix="mosbench-") as tmp:
        src = str(Path(tmp) / "in.wav")
        dst = str(Path(tmp) / "out.wav")
        save_audio(clip, src)
        cmd = build_command(template, src, dst)
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            diag = (exc.stdout or "") + (exc.stderr or "") if isinstance(exc.stdout, str) else ""
            raise AdapterError(f"{name}: timed out after {timeout} s", diag) from exc
        except OSError as exc:
            raise AdapterError(f"{name}: cannot start {cmd[0]!r}: {exc}") from exc
        diag = (proc.stdout or "") + (proc.stderr or "")
        if proc.returncode != 0:
            raise AdapterError(f"{name}: exited with status {proc.returncode}", diag)
        try:
            out = load_audio(dst, clip_id=clip.clip_id, dataset=clip.dataset)
        except DataIOError as exc:
            raise AdapterError(f"{name}: unreadable output: {exc}", diag) from exc
    if diag:
        log.debug("%s output for %s: %s", name, clip.clip_id, diag.strip())
    return out.replace(out.samples, Step(name, {"command": template}),
                       provenance=clip.provenance)
