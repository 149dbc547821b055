"""Reference predictor server: echoes each request back as its prediction.

Speaks the framed stdin/stdout protocol; useful as a loopback test target and
as a template for real predictor servers. Run with
``python -m flarekit.echo_predictor``.
"""

from __future__ import annotations

import sys

from .protocol import Frame, FrameError, KIND_ERROR, KIND_REQUEST, KIND_RESPONSE, read_frame, write_frame


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    while True:
        try:
            frame = read_frame(stdin)
        except FrameError as exc:
            write_frame(stdout, Frame(kind=KIND_ERROR, message=str(exc)))
            continue
        if frame is None:
            return 0
        if frame.kind != KIND_REQUEST:
            write_frame(stdout, Frame(kind=KIND_ERROR, message=f"expected a request, got kind {frame.kind}"))
            continue
        write_frame(stdout, Frame(kind=KIND_RESPONSE, image=frame.image))


if __name__ == "__main__":
    sys.exit(serve())
