"""Inpainting a 16x16 blob image with 30% of the pixels kept.

Three models train on the same incomplete images: ES, EI and plain
measurement consistency (MC).  MC only scores the pixels it was given, so it
has no reason to fill the others and should do no better than zero filling.
Takes about a minute.
"""

import tempfile
from pathlib import Path

import numpy as np

from eqsplit import experiments as ex
from eqsplit.metrics import psnr

root = Path(__file__).resolve().parents[1] / "configs" / "acceptance"
out = Path(tempfile.mkdtemp())
for kind in ("es", "ei", "mc"):
    row = ex.run(ex.RunConfig.load(root / f"inpaint-{kind}.yaml"), output=out / kind)[0]
    print(f"{kind:>3}: PSNR {row['psnr_mean']:.2f} dB  SSIM {row['ssim_mean']:.3f}  EQUIV {row['equiv_db']:.0f} dB")

cfg = ex.RunConfig.load(root / "inpaint-es.yaml")
_, x = ex.load_images(cfg)
op = ex.build_operator(cfg)
print(f"zero filling: PSNR {np.mean(psnr(op(x) @ op.matrix, x)):.2f} dB")
print("run directories under", out)
