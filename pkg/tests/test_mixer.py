import copy

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from grnet.backbone import StagePlan, init_weights
from grnet.exceptions import ShapeError
from grnet.mixer import RecodingMixer, mix, mix_pair

from conftest import central_difference, rel_err


def _mixer(plan=StagePlan(), seed=0, in_channels=64):
    m = RecodingMixer(plan, in_channels)
    init_weights(m, torch.Generator().manual_seed(seed))
    return m.eval()


def _levels(s, n=1, seed=0, dtype=torch.float32, c=64):
    g = torch.Generator().manual_seed(seed)
    return tuple(torch.rand(n, c, s // k, s // k, generator=g, dtype=dtype) for k in (1, 2, 4))


def test_strides_at_352():
    out = mix(*_levels(88), _mixer())
    assert [o.shape[-1] for o in out] == [88, 44, 22, 11]


def test_desk_plan_widths():
    out = mix(*_levels(16), _mixer())
    assert [o.shape[1] for o in out] == [16, 32, 64, 128]


def test_insertion_vanishes_for_zero_inputs():
    m = _mixer()
    with torch.no_grad():
        for ins in (m.insert2, m.insert3):
            ins.conv.weight.zero_()
            ins.conv.bias.zero_()
    b1, b2, b3 = _levels(16)
    out = m(b1, torch.zeros_like(b2), torch.zeros_like(b3))
    x2p = m.stage2(m.insert1(b1))
    assert torch.equal(out.x2p, x2p)
    assert torch.allclose(out.x3p, m.stage3(x2p))
    assert torch.allclose(out.x4p, m.stage4(out.x3p))


def test_mix_pair_identical_params_identical_outputs():
    ma = _mixer(seed=4)
    mb = copy.deepcopy(ma)
    lv = _levels(16)
    oa, ob = mix_pair(lv, lv, ma, mb)
    for a, b in zip(oa, ob):
        assert torch.equal(a, b)


def test_mix_pair_independent_params():
    lv = _levels(16)
    oa, ob = mix_pair(lv, lv, _mixer(seed=1), _mixer(seed=2))
    assert not torch.allclose(oa.x5p, ob.x5p)


def test_stride_mismatch():
    b1, b2, b3 = _levels(16)
    with pytest.raises(ShapeError):
        mix(b1, b3, b3, _mixer())


def test_concat_inputs():
    out = mix(*_levels(16, c=128), _mixer(in_channels=128))
    assert out.x2p.shape == (1, 16, 16, 16)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4))
def test_stride_contract_any_size(k):
    s = 8 * k
    out = mix(*_levels(s), _mixer(StagePlan.tiny()))
    assert [o.shape[-1] for o in out] == [s, s // 2, s // 4, s // 8]


def test_gradient_wrt_b2_matches_finite_differences():
    m = _mixer(StagePlan.tiny(), seed=6).double()
    b1, b2, b3 = _levels(8, dtype=torch.float64, seed=3)
    b2.requires_grad_(True)
    sum(o.sum() for o in m(b1, b2, b3)).backward()

    def f():
        with torch.no_grad():
            return sum(o.sum() for o in m(b1, b2, b3)).item()

    idx = np.random.default_rng(1).choice(b2.numel(), 20, replace=False)
    errs = [rel_err(b2.grad.view(-1)[i].item(), central_difference(f, b2, int(i)), floor=1e-6)
            for i in idx]
    assert max(errs) <= 1e-3, errs
