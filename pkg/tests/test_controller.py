from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lazyctrl.controller import (ControllerConfig, ControllerState, DropPacket, FlowMod,
                                 GroupConfig, RelayArp, UnknownSwitchError, controller_load,
                                 handle_packet_in, make_group_config, maybe_regroup,
                                 regroup_due, setup_groups)
from lazyctrl.fib import LFib
from lazyctrl.grouping import Grouping
from lazyctrl.switch import Encap, ForwardLocal, Packet, PacketKind, Timing
from lazyctrl.traffic import US_PER_S, IntensityMatrix, addr_host, host_addr, topology_from_layout

S = US_PER_S


def _state(hosts_per_switch, groups, tenants=None, config=None, reference=None):
    topo = topology_from_layout(hosts_per_switch, tenants)
    limit = max(len(g) for g in groups)
    grouping = Grouping(tuple(frozenset(g) for g in groups), limit, reference)
    state = ControllerState(topo, grouping, setup_groups(topo, grouping, seed=0),
                            config=config or ControllerConfig())
    for sw, hosts in enumerate(topo.hosts_by_switch):
        lf = LFib(sw, {host_addr(h): topo.host_port[h] for h in hosts})
        lf.version = 1
        state.clib.update(sw, lf.snapshot())
    return state


def _data(src, dst):
    return Packet(PacketKind.PLAIN, host_addr(src), host_addr(dst), 0)


# --- group setup ------------------------------------------------------------------


def test_single_switch_group_is_its_own_designated_and_wheel():
    topo = topology_from_layout([1])
    (gc,) = setup_groups(topo, Grouping((frozenset({0}),), 1))
    assert gc.designated == 0 and gc.backups == () and gc.wheel == {0: (0, 0)}


def test_fig1_grouping_gives_two_configs():
    topo = topology_from_layout([1] * 5)
    g = Grouping((frozenset({0, 2, 4}), frozenset({1, 3})), 3)
    configs = setup_groups(topo, g, seed=5)
    assert [len(c.members) for c in configs] == [3, 2]
    assert configs == setup_groups(topo, g, seed=5)


def test_members_follow_mgmt_address_order():
    topo = topology_from_layout([1, 1, 1], mgmt_addrs=[30, 10, 20])
    gc = make_group_config(topo, 0, {0, 1, 2}, 3, seed=0)
    assert gc.members == (1, 2, 0)
    assert gc.downstream(1) == 2 and gc.upstream(1) == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 32), st.integers(0, 3))
def test_group_config_invariants(n, seed, n_backups):
    topo = topology_from_layout([1] * n)
    gc = make_group_config(topo, 0, range(n), n, seed, n_backups)
    assert gc.designated in gc.members
    assert len(gc.backups) == min(n_backups, n - 1)
    nxt = gc.reselect_designated()
    assert nxt.designated in nxt.members
    if n > 1:
        assert nxt.designated != gc.designated
        assert gc.designated not in nxt.backups


def test_group_config_validation():
    wheel = {0: (1, 1), 1: (0, 0)}
    with pytest.raises(ValueError):
        GroupConfig(0, (0, 1), 2, (), wheel, Timing(), 2)
    with pytest.raises(ValueError):
        GroupConfig(0, (0, 1), 0, (0,), wheel, Timing(), 2)
    with pytest.raises(ValueError):
        GroupConfig(0, (0, 1), 0, (), wheel, Timing(), 1)
    with pytest.raises(ValueError):
        GroupConfig(0, (0, 1, 2), 0, (), {0: (2, 1), 1: (0, 0), 2: (1, 0)}, Timing(), 3)


def test_designated_choice_is_stable_for_an_untouched_group():
    topo = topology_from_layout([1] * 6)
    a = make_group_config(topo, 0, {0, 1, 2}, 3, seed=7)
    b = make_group_config(topo, 4, {2, 1, 0}, 3, seed=7)
    assert a.designated == b.designated and a.backups == b.backups


# --- PacketIn ----------------------------------------------------------------------


def test_inter_group_packet_installs_two_rules():
    state = _state([1, 1, 1, 1], [{0, 1}, {2, 3}])
    acts = handle_packet_in(state, 0, _data(0, 2))
    idle = 60 * S
    assert [(a.switch, a.rule.action, a.rule.match_src, a.rule.match_dst,
             a.rule.idle_timeout_us) for a in acts] == [
        (0, Encap(2), host_addr(0), host_addr(2), idle),
        (2, ForwardLocal(1), host_addr(0), host_addr(2), idle),
    ]
    assert all(isinstance(a, FlowMod) for a in acts)


def test_same_switch_packet_installs_one_rule():
    state = _state([2, 1], [{0}, {1}])
    (act,) = handle_packet_in(state, 0, _data(0, 1))
    assert act.switch == 0 and act.rule.action == ForwardLocal(2)


def test_unknown_destination_is_dropped():
    state = _state([1, 1], [{0}, {1}])
    (act,) = handle_packet_in(state, 0, _data(0, 77))
    assert isinstance(act, DropPacket)


def test_unknown_ingress_raises():
    state = _state([1, 1], [{0}, {1}])
    with pytest.raises(UnknownSwitchError):
        handle_packet_in(state, 9, _data(0, 1))


def test_arp_relayed_to_other_groups_holding_tenant():
    # tenant 5 lives on switches 0, 2 and 4, which sit in three different groups
    state = _state([1] * 6, [{0, 1}, {2, 3}, {4, 5}], tenants=[5, 0, 5, 0, 5, 0])
    arp = Packet(PacketKind.PLAIN, host_addr(0), host_addr(99), 5, is_arp_request=True)
    (act,) = handle_packet_in(state, 0, arp)
    assert isinstance(act, RelayArp)
    expect = tuple(sorted(state.configs[g].designated for g in (1, 2)))
    assert act.designated == expect and len(act.designated) == 2


def test_arp_blocking_skips_single_group_tenant():
    cfg = ControllerConfig(arp_blocking=True)
    state = _state([1] * 4, [{0, 1}, {2, 3}], tenants=[5, 5, 0, 0], config=cfg)
    arp = Packet(PacketKind.PLAIN, host_addr(0), host_addr(99), 5, is_arp_request=True)
    assert handle_packet_in(state, 0, arp) == []


def test_tenant_directory_projects_clib():
    state = _state([2, 1, 1], [{0, 1}, {2}], tenants=[3, 4, 3, 4])
    expect = {}
    for sw, snap in state.clib.snapshots.items():
        for addr in snap.entries:
            t = state.topology.host_tenant[addr_host(addr)]
            expect.setdefault(t, set()).add((state.group_of[sw], sw))
    assert state.tenant_directory() == expect == {3: {(0, 0), (0, 1)}, 4: {(0, 0), (1, 2)}}


# --- load window ---------------------------------------------------------------------


def test_controller_load_window():
    state = _state([1, 1], [{0}, {1}])
    assert controller_load(state, 0) == 0
    for i in range(120):
        state.load_window.add(200 * S + i * S // 3)
    assert controller_load(state, 240 * S) == 120
    fresh = _state([1, 1], [{0}, {1}])
    for i in range(100):
        fresh.load_window.add(61 * S + i * S // 2)  # 61 s .. 110.5 s
    assert controller_load(fresh, 171 * S) == 0


# --- regroup trigger ------------------------------------------------------------------


def _loaded(state, now_s, count):
    state.load_window = type(state.load_window)(state.config.load_window_s)
    half = count // 2
    state.load_window.add((now_s - 30) * S, half)
    state.load_window.add(now_s * S, count - half)


def _armed_state(reference=100.0):
    ref = IntensityMatrix.from_edges(4, {(0, 1): 1, (2, 3): 1})
    state = _state([1, 1, 1, 1], [{0, 1}, {2, 3}], reference=ref)
    state.last_regroup_time = 0
    state.last_regroup_load = reference
    return state


@pytest.mark.parametrize("elapsed_s,load,fires", [
    (60, 150, False),    # 50% growth, too soon
    (119, 1000, False),  # any growth, too soon
    (600, 110, False),   # enough time, only 10% growth
    (600, 129, False),
    (180, 140, True),    # 40% growth after three minutes
    (120, 130, True),    # both conditions exactly at the boundary
])
def test_regroup_trigger_conditions(elapsed_s, load, fires):
    state = _armed_state()
    _loaded(state, elapsed_s, load)
    assert regroup_due(state, elapsed_s * S) is fires


def test_first_window_only_sets_reference():
    state = _state([1, 1], [{0}, {1}])
    _loaded(state, 30, 10)
    assert not regroup_due(state, 30 * S) and state.last_regroup_load is None
    _loaded(state, 61, 10)
    assert not regroup_due(state, 61 * S) and state.last_regroup_load == 10


def test_maybe_regroup_applies_delta():
    state = _armed_state()
    w_new = IntensityMatrix.from_edges(4, {(0, 1): 1, (2, 3): 1, (0, 2): 5, (1, 3): 5})
    _loaded(state, 180, 140)
    result = maybe_regroup(state, 180 * S, w_new)
    assert result is not None and result.delta.moved
    assert set(result.grouping.groups) == {frozenset({0, 2}), frozenset({1, 3})}
    assert state.grouping == result.grouping and state.last_regroup_time == 180 * S
    assert result.changed_groups == [0, 1]
    assert [set(c.members) for c in state.configs] == [set(g) for g in result.grouping.groups]
    # the timer restarted: the very next check is too early
    _loaded(state, 200, 1000)
    assert maybe_regroup(state, 200 * S, w_new) is None


def test_maybe_regroup_quiet_without_growth():
    state = _armed_state()
    _loaded(state, 600, 110)
    assert maybe_regroup(state, 600 * S, np.zeros((4, 4))) is None


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 400), min_size=1, max_size=40), st.integers(5, 60))
def test_regroup_rate_capped(growth, check_s):
    # load keeps climbing as fast as the script wants; regroups stay <= 30 per hour
    state = _armed_state(reference=1.0)
    w_new = IntensityMatrix.from_edges(4, {(0, 2): 1, (1, 3): 1, (0, 1): 0.1, (2, 3): 0.1})
    fires = []
    load = 10
    for step, now_s in enumerate(range(check_s, 3 * 3600, check_s)):
        load += growth[step % len(growth)]
        _loaded(state, now_s, load)
        if maybe_regroup(state, now_s * S, w_new) is not None:
            fires.append(now_s)
    for start in range(0, 3 * 3600, 60):
        assert sum(start <= t < start + 3600 for t in fires) <= 30
