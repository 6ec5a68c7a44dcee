"""Verify the hand-written backward pass against central differences.

Every adjoint in the package is analytic; this cross-checks them end to end
through the encoder, attention and both decoder modes on a tiny model. The
probe targets sit close to the model's own predictions so the
finite-difference rounding floor stays far below the tolerance.

Equivalent CLI: sepseq gradcheck --hidden 8 --embed 4 --mode both
"""

import numpy as np

from sepseq import autodiff as ad
from sepseq.model import Mode, ModelConfig, forward_batch, init_params
from sepseq.optim import grad_check
from sepseq.preprocess import Features

rng = np.random.default_rng(0)
for mode in (Mode.AR, Mode.OS):
    config = ModelConfig(
        hidden=8, embed=4, features=Features.P_XR, mode=mode,
        input_len=12, output_len=12,
    )
    params = init_params(config, seed=1)
    inputs = rng.normal(1.5, 0.5, size=(2, 12, 2))
    pred0 = forward_batch(inputs, params, config).data
    targets = pred0 + 0.01 * rng.standard_normal(pred0.shape)

    def loss_fn(p, inputs=inputs, targets=targets, config=config):
        return ad.mse_loss(forward_batch(inputs, p, config), targets)

    report = grad_check(loss_fn, params, tolerance=1e-4, probe_count=200, seed=3)
    print(f"{mode.value}: {report.summary()}")
    worst = sorted(report.probes, key=lambda p: -p.rel_error)[:3]
    for probe in worst:
        print(f"    {probe.name}[{probe.flat_index}]: analytic {probe.analytic:+.3e} "
              f"numeric {probe.numeric:+.3e} rel {probe.rel_error:.2e}")
