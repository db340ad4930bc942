from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lazyctrl.controller import make_group_config
from lazyctrl.failover import (DETECTION_ROUNDS, SCRIPT_KINDS, DetourRoute, FailureVerdict,
                               FaultKind, LinkHealth, LossObservation, RebootAndPoll,
                               RelayControlVia, ReselectDesignated, Resync, SpreadOutage,
                               combine_rounds, diagnose, execute_plan, infer_failure,
                               plan_recovery, run_detection_round)
from lazyctrl.traffic import topology_from_layout

from oracles import all_flag_patterns, inference_reference

EXPECTED_KIND = {"switch": FaultKind.SWITCH_DOWN, "ctrl_link": FaultKind.CONTROL_LINK,
                 "peer_up": FaultKind.PEER_LINK_UP, "peer_down": FaultKind.PEER_LINK_DOWN}


def _group(n=5, seed=0, n_backups=1):
    topo = topology_from_layout([1] * n)
    return make_group_config(topo, 0, range(n), n, seed, n_backups)


def _obs(n, **flags):
    base = {k: {s: False for s in range(n)} for k in ("up", "down", "ctrl")}
    for key, subjects in flags.items():
        for s in subjects:
            base[key][s] = True
    return LossObservation(0, base["up"], base["down"], base["ctrl"])


def _window(group, health, window_id=0):
    return combine_rounds(run_detection_round(group, health, window_id=window_id)
                          for _ in range(DETECTION_ROUNDS))


# --- inference table -------------------------------------------------------------


@pytest.mark.parametrize("flags", all_flag_patterns())
def test_inference_table(flags):
    up, down, ctrl = flags
    obs = LossObservation(3, {1: up}, {1: down}, {1: ctrl})
    verdict = infer_failure(obs, 1)
    expect = inference_reference(up, down, ctrl)
    if expect is None:
        assert verdict is None
    else:
        assert verdict == FailureVerdict(1, FaultKind(expect), 3)


def test_ambiguous_pattern_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="lazyctrl.failover"):
        assert infer_failure(_obs(3, up=[1], down=[1]), 1) is None
    assert "ambiguous" in caplog.text


def test_combine_rounds_requires_persistent_loss():
    a, b = _obs(2, ctrl=[0, 1]), _obs(2, ctrl=[1])
    assert combine_rounds([a, b]).ctrl == {0: False, 1: True}
    with pytest.raises(ValueError):
        combine_rounds([])


# --- detection rounds -------------------------------------------------------------


def test_healthy_round_has_no_flags():
    assert run_detection_round(_group(), LinkHealth()).healthy


def test_crash_sets_all_three_flags():
    g = _group()
    h = LinkHealth()
    h.inject("switch", 3)
    obs = run_detection_round(g, h)
    assert obs.up[3] and obs.down[3] and obs.ctrl[3]


def test_ctrl_cut_sets_only_ctrl_flag():
    g = _group()
    h = LinkHealth()
    h.inject("ctrl_link", 2)
    obs = run_detection_round(g, h)
    assert obs.ctrl == {s: s == 2 for s in g.members}
    assert not any(obs.up.values()) and not any(obs.down.values())


@pytest.mark.parametrize("kind", SCRIPT_KINDS)
@pytest.mark.parametrize("subject", range(5))
def test_single_fault_detected_and_recovered(kind, subject):
    g = _group()
    h = LinkHealth()
    h.inject(kind, subject, g)
    verdicts = diagnose(_window(g, h), g)
    assert verdicts == [FailureVerdict(subject, EXPECTED_KIND[kind], 0)]
    plan = plan_recovery(verdicts[0], g)
    g2 = execute_plan(plan, g, h)
    assert _window(g2, h, 1).healthy
    assert g2.designated in g2.members


def test_fault_needs_group_for_peer_links():
    with pytest.raises(ValueError):
        LinkHealth().inject("peer_up", 1)
    with pytest.raises(ValueError):
        LinkHealth().inject("meteor", 1, _group())


def test_zero_loss_gives_no_verdicts():
    g = _group()
    h = LinkHealth(loss_prob=0.0, rng=np.random.default_rng(0))
    for w in range(2000):
        assert diagnose(_window(g, h, w), g) == []


def test_random_loss_is_filtered_by_the_window():
    # 1% independent probe loss: three consecutive losses of one probe are rare
    g = _group()
    h = LinkHealth(loss_prob=0.01, rng=np.random.default_rng(1))
    verdicts = sum(len(diagnose(_window(g, h, w), g)) for w in range(2000))
    assert verdicts <= 2


# --- recovery plans ------------------------------------------------------------------


def _non_designated(g, k=1):
    return [m for m in g.members if m != g.designated][:k]


def test_control_link_plan_relays_via_upstream():
    g = _group()
    n = _non_designated(g)[0]
    plan = plan_recovery(FailureVerdict(n, FaultKind.CONTROL_LINK, 0), g)
    assert plan.actions == (RelayControlVia(n, g.upstream(n)),)


def test_switch_down_on_designated_has_four_actions():
    g = _group()
    plan = plan_recovery(FailureVerdict(g.designated, FaultKind.SWITCH_DOWN, 0), g)
    kinds = [type(a) for a in plan.actions]
    assert kinds == [ReselectDesignated, SpreadOutage, RebootAndPoll, Resync]
    assert plan.actions[0].new in g.backups


def test_switch_down_elsewhere_has_three_actions():
    g = _group()
    n = _non_designated(g)[0]
    plan = plan_recovery(FailureVerdict(n, FaultKind.SWITCH_DOWN, 0), g)
    assert [type(a) for a in plan.actions] == [SpreadOutage, RebootAndPoll, Resync]


def test_peer_link_between_ordinary_switches_keeps_designated():
    g = _group()
    n = next(m for m in g.members
             if m != g.designated and g.upstream(m) != g.designated)
    plan = plan_recovery(FailureVerdict(n, FaultKind.PEER_LINK_UP, 0), g)
    assert plan.actions == (DetourRoute(n, g.upstream(n)),)
    assert not any(isinstance(a, ReselectDesignated) for a in plan.actions)


def test_peer_link_at_designated_reselects():
    g = _group()
    d = g.designated
    plan = plan_recovery(FailureVerdict(d, FaultKind.PEER_LINK_DOWN, 0), g)
    assert plan.actions[0] == DetourRoute(d, g.downstream(d))
    assert isinstance(plan.actions[1], ReselectDesignated)
    assert plan.actions[1].new not in (d, g.downstream(d))


def test_plan_rejects_foreign_switch():
    with pytest.raises(ValueError):
        plan_recovery(FailureVerdict(42, FaultKind.SWITCH_DOWN, 0), _group())


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2 ** 32), st.integers(0, 3),
       st.sampled_from(list(FaultKind)), st.data())
def test_reselection_preserves_group_invariants(n, seed, n_backups, kind, data):
    g = _group(n, seed, n_backups)
    subject = data.draw(st.sampled_from(g.members))
    g2 = execute_plan(plan_recovery(FailureVerdict(subject, kind, 0), g), g, LinkHealth())
    assert g2.designated in g2.members and g2.members == g.members
    assert g2.designated not in g2.backups
    assert all(b in g2.members for b in g2.backups)
    if kind is FaultKind.SWITCH_DOWN and subject == g.designated:
        assert g2.designated != subject
