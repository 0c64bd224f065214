import numpy as np
import pytest

from latentfuzz import nn, orchestrator
from latentfuzz.config import CampaignConfig
from latentfuzz.orchestrator import (
    EpochReport, ever_stalled, generative_pass, init_state, run_campaign, run_epoch, stall_check,
    training_pass,
)
from latentfuzz.targets import Outcome, execute_target

SMALL = dict(map_size=64, vae_hidden=(32, 16), filters=8, deconv_blocks=5, batch_size=16,
             train_batch_size=4, steps_per_pass=3, k=10)


def small(**kw):
    return CampaignConfig(**{**SMALL, **kw})


def _report(epoch, new):
    return EpochReport(epoch, new, 0, 0, 0.0, 0.0, 0.0, 0, 1e-4)


def test_init_state_deterministic():
    a, b = init_state(small(), 3), init_state(small(), 3)
    assert np.array_equal(a.staged, b.staged)
    assert a.vae.params.digest() == b.vae.params.digest()
    assert a.gnn.params.digest() == b.gnn.params.digest()
    assert init_state(small(), 4).vae.params.digest() != a.vae.params.digest()
    assert a.config.seed == 3 and a.learning_rate == 1e-4


def test_initial_inputs_standard_normal():
    st = init_state(small(batch_size=64), 0)
    assert st.staged.shape == (64, 16)
    assert abs(st.staged.mean()) < 0.1 and abs(st.staged.std() - 1) < 0.1


def test_generative_pass_reads_only():
    st = init_state(small(), 1)
    vd, gd = st.vae.params.digest(), st.gnn.params.digest()
    res = generative_pass(st)
    assert st.vae.params.digest() == vd and st.gnn.params.digest() == gd
    assert len(res.executions) == 16
    assert 1 <= len(st.corpus) <= 16
    assert res.new_distinct == len(st.seen) == len(st.corpus)
    assert all(r.epoch_found == 0 and r.latent.shape == (16,) for r in st.corpus)


def test_rejected_inputs_enter_corpus():
    st = init_state(small(), 1)
    generative_pass(st)
    assert any(r.outcome is Outcome.REJECTED for r in st.corpus)


def test_corpus_traces_unique_and_crashes_reproduce():
    st = init_state(small(target="csub"), 2)
    run_campaign(st, 3)
    digests = [r.trace.digest() for r in st.corpus]
    assert len(digests) == len(set(digests)) and len(st.corpus) <= 10
    for c in st.crashes:
        assert execute_target("csub", c.input, 64).outcome is Outcome.CRASH


def test_zero_steps_leaves_parameters():
    st = init_state(small(steps_per_pass=0), 1)
    vd, gd = st.vae.params.digest(), st.gnn.params.digest()
    rep = run_epoch(st)
    assert st.vae.params.digest() == vd and st.gnn.params.digest() == gd
    assert rep.vae_loss == 0.0 and st.epoch == 1


def test_epoch_report_fields_and_roundtrip():
    st = init_state(small(), 5)
    rep = run_epoch(st)
    assert rep.epoch == 0 and rep.corpus_size == len(st.corpus)
    assert rep.distinct_traces_total == len(st.seen)
    assert np.isfinite([rep.vae_loss, rep.gnn_loss, rep.gnn_ce]).all()
    assert EpochReport.from_dict(rep.to_dict()) == rep
    assert st.staged.shape == (16, 16)


def test_run_deterministic():
    a = run_campaign(init_state(small(), 7), 3)
    b = run_campaign(init_state(small(), 7), 3)
    assert all(x.same_as(y) for x, y in zip(a.reports, b.reports))
    assert all(x.same_as(y) for x, y in zip(a.corpus, b.corpus))
    assert a.gnn.params.digest() == b.gnn.params.digest()


def test_training_needs_corpus():
    with pytest.raises(ValueError):
        training_pass(init_state(small(), 0))


def test_stall_check_examples():
    assert not stall_check([_report(i, 0) for i in range(19)])
    assert stall_check([_report(i, 0) for i in range(20)])
    assert not stall_check([_report(0, 0)] * 19 + [_report(19, 1)])
    assert stall_check([_report(0, 5)] + [_report(i, 0) for i in range(1, 21)])
    assert ever_stalled([_report(i, 0) for i in range(20)] + [_report(20, 3)])
    assert not ever_stalled([_report(i, i % 19 == 0) for i in range(60)])


def test_instability_rolls_back_and_halves(monkeypatch):
    st = init_state(small(), 1)
    generative_pass(st)
    vd = st.vae.params.digest()
    real = orchestrator._train
    calls = []

    def flaky(state, lr):
        calls.append(lr)
        if len(calls) == 1:
            state.vae.params.tensors["enc0.W"][...] = 0  # partial update before failing
            raise nn.InstabilityError("vae loss is not finite")
        assert state.vae.params.digest() == vd
        return real(state, lr)

    monkeypatch.setattr(orchestrator, "_train", flaky)
    training_pass(st)
    assert calls == [1e-4, 5e-5] and st.lr_halved and st.learning_rate == 5e-5


def test_second_instability_aborts(monkeypatch):
    st = init_state(small(), 1)
    generative_pass(st)
    st.lr_halved = True

    def bad(state, lr):
        raise nn.InstabilityError("gnn loss is not finite")

    monkeypatch.setattr(orchestrator, "_train", bad)
    with pytest.raises(nn.InstabilityError):
        training_pass(st)
