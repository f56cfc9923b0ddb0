"""Python bindings for the pqe intra codec, enhancement network and BD-rate tools."""

from ._pqe import (
    ArgumentError,
    CurveError,
    FormatError,
    OverlapError,
    ParseError,
    TrainingError,
    bd_rate,
    decode,
    encode,
    enhance_plane,
    lambda_of_qp,
    psnr,
    qstep,
    run_cli,
    save_identity_model,
)

__all__ = [
    "ArgumentError",
    "CurveError",
    "FormatError",
    "OverlapError",
    "ParseError",
    "TrainingError",
    "bd_rate",
    "decode",
    "encode",
    "enhance_plane",
    "lambda_of_qp",
    "psnr",
    "qstep",
    "run_cli",
    "save_identity_model",
]
