"""Regenerate the bundled case files in src/accep/data.

    python3 tools/make_fixtures.py
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from accep.caseio import save_case
from accep.netmodel import (
    AcBranch,
    Bus,
    CapabilityCurve,
    DcBranch,
    NetworkCase,
    PowerSource,
    SnapshotSeries,
    derive_reactive_loads,
    hvdc_loss_factor,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "accep" / "data"


def _series(delta, load_p, load_q=None, availability=None, inflow=None, pf=0.99):
    load_p = {k: np.asarray(v, dtype=float) for k, v in load_p.items()}
    q = {k: derive_reactive_loads(v, pf) for k, v in load_p.items()}
    q.update({k: np.asarray(v, dtype=float) for k, v in (load_q or {}).items()})
    return SnapshotSeries(np.asarray(delta, dtype=float), load_p, q,
                          {k: np.asarray(v, dtype=float) for k, v in (availability or {}).items()},
                          {k: np.asarray(v, dtype=float) for k, v in (inflow or {}).items()})


def case3():
    """Triangle with two expandable generators and one load."""
    buses = tuple(Bus(str(i)) for i in (1, 2, 3))
    lines = (
        AcBranch("l12", "1", "2", r=0.01, x=0.1, f_max=1.0, a=0.7, u_min=1, u_max=2, c=4.0,
                 length_km=50),
        AcBranch("l13", "1", "3", r=0.01, x=0.1, f_max=1.0, a=0.7, u_min=1, u_max=2, c=4.0,
                 length_km=50),
        AcBranch("l23", "2", "3", r=0.01, x=0.1, f_max=1.0, a=0.7, u_min=1, u_max=2, c=4.0,
                 length_km=50),
    )
    gens = (
        PowerSource("g1", "1", "SG", carrier="coal", p_max=1.0, q_min=-0.4, q_max=0.6,
                    capability=CapabilityCurve.d_curve(), u_max=2.0, c=20.0, o=10.0),
        PowerSource("g2", "2", "SG", carrier="gas", p_max=1.0, q_min=-0.4, q_max=0.6,
                    capability=CapabilityCurve.d_curve(), u_max=2.0, c=12.0, o=30.0),
    )
    case = NetworkCase("case3", buses, lines, (), gens)
    return case, _series([1.0], {"3": [1.2]})


def case5():
    """Two-cycle meshed network with gas, wind, a battery and a compensator."""
    buses = tuple(Bus(str(i)) for i in range(1, 6))
    spec = [("a", "1", "2", 0.01, 0.08), ("b", "1", "3", 0.02, 0.12), ("c", "2", "3", 0.015, 0.1),
            ("d", "3", "4", 0.01, 0.09), ("e", "4", "5", 0.02, 0.1), ("f", "2", "5", 0.03, 0.2)]
    lines = tuple(AcBranch(i, f, t, r, x, b_sh=0.02, f_max=1.0, a=0.7, u_min=1, u_max=2, c=5.0,
                           length_km=100) for i, f, t, r, x in spec)
    sources = (
        PowerSource("g1", "1", "SG", carrier="gas", p_max=2.0, q_min=-0.8, q_max=1.2,
                    capability=CapabilityCurve.d_curve(), u_max=3.0, c=10.0, o=30.0, o_su=1.0),
        PowerSource("w", "5", "IBR", carrier="wind", p_max=1.0, q_min=-0.3287, q_max=0.3287,
                    capability=CapabilityCurve.triangle(), u_max=4.0, c=8.0,
                    availability="wind"),
        PowerSource("bat", "4", "storage", carrier="battery", p_max=0.5, q_min=-0.2, q_max=0.2,
                    u_max=2.0, c=3.0, e_max=2.0, eta_dis=0.95, eta_chg=0.95),
        PowerSource("cap", "3", "compensator", carrier="compensator", q_min=0.0, q_max=1.0,
                    u_max=5.0, c=0.1),
    )
    case = NetworkCase("case5", buses, lines, (), sources)
    series = _series(np.ones(6), {"3": [1.0, 1.5, 1.2, 0.8, 1.3, 0.9],
                                  "4": [0.5, 0.6, 0.7, 0.4, 0.55, 0.45]},
                     availability={"wind": [0.2, 0.9, 0.5, 0.1, 0.7, 0.35]})
    return case, series


def case24(T: int = 24):
    """Two synchronous islands joined by a VSC link.

    Island A (buses 1-20) has cheap generation in its western half and
    most load in the east; the tie line 10-11 is the congested corridor.
    Island B (buses 21-24) is wind-dominated.
    """
    buses = tuple(Bus(str(i), island="A" if i <= 20 else "B") for i in range(1, 25))
    lines = []

    def line(a, b, x, u_max=1.0, c=0.0, length=80.0, f_max=1.5):
        lines.append(AcBranch(f"l{a}_{b}", str(a), str(b), r=x / 8.0, x=x, b_sh=0.03,
                              f_max=f_max, a=0.7, u_min=1.0, u_max=u_max, c=c,
                              length_km=length))

    west = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1), (2, 6), (6, 7), (7, 8), (8, 3), (8, 9),
            (9, 10), (10, 6), (4, 9)]
    east = [(11, 12), (12, 13), (13, 14), (14, 15), (15, 11), (12, 16), (16, 17), (17, 18),
            (18, 13), (18, 19), (19, 20), (20, 16), (14, 19)]
    for k, (a, b) in enumerate(west + east):
        line(a, b, 0.06 + 0.01 * (k % 4))
    line(10, 11, 0.08, u_max=4.0, c=2.0, length=200.0, f_max=1.0)
    for a, b in [(21, 22), (22, 23), (23, 24), (24, 21)]:
        line(a, b, 0.05, length=60.0)
    link = DcBranch("hvdc", "20", "21", p_max=1.0, length_km=300.0,
                    eta=hvdc_loss_factor(300.0), converter="vsc", u_min=1.0, u_max=1.0)

    d_curve = CapabilityCurve.d_curve()
    tri = CapabilityCurve.triangle()
    tan_phi = tri.q_max_frac

    def sg(sid, bus, carrier, o, c, u_max, o_su=0.5):
        return PowerSource(sid, bus, "SG", carrier=carrier, p_max=1.0, q_min=-0.4, q_max=0.6,
                           capability=d_curve, u_max=u_max, c=c, o=o, o_su=o_su)

    def ibr(sid, bus, profile, c, u_max):
        return PowerSource(sid, bus, "IBR", carrier="wind", p_max=1.0, q_min=-tan_phi,
                           q_max=tan_phi, capability=tri, u_max=u_max, c=c, o=0.0,
                           availability=profile)

    def comp(sid, bus, u_min):
        return PowerSource(sid, bus, "compensator", carrier="compensator", q_min=-0.5,
                           q_max=1.0, u_min=u_min, u_max=u_min + 3.0, c=0.5)

    sources = (
        sg("coal1", "1", "coal", 15.0, 30.0, 6.0),
        sg("coal3", "3", "coal", 16.0, 30.0, 6.0),
        sg("gas7", "7", "gas", 40.0, 12.0, 4.0),
        sg("gas13", "13", "gas", 55.0, 10.0, 4.0),
        sg("gas18", "18", "gas", 60.0, 10.0, 4.0),
        ibr("wind5", "5", "wind_w", 18.0, 5.0),
        ibr("wind15", "15", "wind_e", 22.0, 4.0),
        ibr("wind23", "23", "wind_b", 15.0, 5.0),
        sg("gas22", "22", "gas", 70.0, 10.0, 2.0),
        PowerSource("bat15", "15", "storage", carrier="battery", p_max=0.5, q_min=-0.2,
                    q_max=0.2, u_max=4.0, c=4.0, e_max=2.0, eta_dis=0.95, eta_chg=0.95),
        comp("comp12", "12", 1.0),
        comp("comp19", "19", 1.0),
        comp("comp24", "24", 0.5),
    )
    case = NetworkCase("case24", buses, tuple(lines), (link,), sources)

    h = np.arange(T) * 24.0 / T
    daily = 0.75 + 0.25 * np.sin((h - 8.0) * math.pi / 12.0)
    east_loads = {"11": 0.6, "12": 0.5, "14": 0.7, "16": 0.5, "17": 0.4, "19": 0.6, "20": 0.5}
    west_loads = {"2": 0.3, "4": 0.35, "6": 0.3, "9": 0.25}
    island_loads = {"22": 0.3, "24": 0.35}
    load_p = {b: np.round(v * daily, 6) for b, v in {**east_loads, **west_loads,
                                                     **island_loads}.items()}
    wind_w = np.round(0.45 + 0.35 * np.cos(h * math.pi / 9.0), 6)
    wind_e = np.round(0.4 + 0.3 * np.sin(h * math.pi / 7.0 + 1.0), 6)
    wind_b = np.round(0.5 + 0.4 * np.cos(h * math.pi / 11.0 + 2.0), 6)
    series = _series(np.full(T, 24.0 / T), load_p,
                     availability={"wind_w": wind_w, "wind_e": wind_e, "wind_b": wind_b})
    return case, series


def weak3(two_failing: bool = False):
    """Radial feeder ending in a heavily loaded weak bus with an empty
    compensator slot; one (or two) snapshots need reactive support there."""
    buses = tuple(Bus(str(i)) for i in (1, 2, 3))
    lines = (
        AcBranch("l12", "1", "2", r=0.01, x=0.05, f_max=3.0, u_min=1, u_max=1, length_km=20),
        AcBranch("l23", "2", "3", r=0.05, x=0.4, f_max=1.25, u_min=1, u_max=1, length_km=150),
    )
    sources = (
        PowerSource("g1", "1", "SG", carrier="gas", p_max=1.0, q_min=-0.4, q_max=0.6,
                    capability=CapabilityCurve.d_curve(), u_max=5.0, c=10.0, o=20.0, o_su=0.5),
        PowerSource("comp3", "3", "compensator", carrier="compensator", q_min=0.0, q_max=1.0,
                    u_min=0.0, u_max=5.0, c=1.0),
    )
    name = "weak3_two" if two_failing else "weak3"
    case = NetworkCase(name, buses, lines, (), sources)
    if two_failing:
        p, q = [0.3, 1.0, 0.95, 0.2], [0.1, 0.45, 0.42, 0.05]
    else:
        p, q = [0.3, 1.0, 0.3, 0.2], [0.1, 0.45, 0.1, 0.05]
    return case, _series(np.ones(4), {"3": p}, {"3": q})


def blocking():
    """Four-bus ring where one line's angle limit caps its flow below one
    circuit's rating (x=0.8, a=0.7, f=1 gives threshold 0.935)."""
    buses = tuple(Bus(str(i)) for i in (1, 2, 3, 4))
    lines = (
        AcBranch("l12", "1", "2", r=0.01, x=0.1, a=0.7, u_min=1, u_max=3, c=3.0),
        AcBranch("l23", "2", "3", r=0.01, x=0.2, a=0.7, u_min=1, u_max=3, c=3.0),
        AcBranch("l34", "3", "4", r=0.08, x=0.8, a=0.7, f_max=1.0, u_min=1, u_max=3, c=3.0),
        AcBranch("l41", "4", "1", r=0.01, x=0.1, a=0.7, u_min=1, u_max=3, c=3.0),
    )
    gen = (PowerSource("g1", "1", "SG", carrier="gas", p_max=1.0, q_min=-0.4, q_max=0.6,
                       capability=CapabilityCurve.d_curve(), u_max=3.0, c=10.0, o=20.0),)
    case = NetworkCase("blocking", buses, lines, (), gen)
    return case, _series([1.0, 1.0], {"3": [0.6, 0.8], "4": [0.5, 0.4]})


def lowload():
    """Cable-heavy ring fed by inverter-based generation, with a few
    near-empty snapshots where line charging swamps reactive demand."""
    buses = tuple(Bus(str(i)) for i in range(1, 7))
    ring = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1), (2, 5)]
    lines = tuple(AcBranch(f"l{a}_{b}", str(a), str(b), r=0.02, x=0.1, b_sh=0.08, f_max=2.0,
                           a=0.7, u_min=1, u_max=1, length_km=60) for a, b in ring)
    tri = CapabilityCurve.triangle()
    tan_phi = tri.q_max_frac
    sources = (
        PowerSource("w1", "1", "IBR", carrier="wind", p_max=1.0, q_min=-tan_phi, q_max=tan_phi,
                    capability=tri, u_min=0, u_max=6.0, c=10.0, o=0.5,
                    availability="wind"),
        PowerSource("pv4", "4", "IBR", carrier="solar", p_max=1.0, q_min=-tan_phi,
                    q_max=tan_phi, capability=tri, u_min=0, u_max=6.0, c=8.0, o=0.5,
                    availability="solar"),
        PowerSource("g2", "2", "SG", carrier="gas", p_max=1.0, q_min=-0.4, q_max=0.6,
                    capability=CapabilityCurve.d_curve(), u_max=4.0, c=15.0, o=50.0),
    )
    case = NetworkCase("lowload", buses, lines, (), sources)
    scale = np.array([1.0, 1.2, 0.05, 1.1, 0.9, 0.04, 1.3, 0.06])
    loads = {"3": 0.8 * scale, "5": 0.9 * scale, "6": 0.5 * scale}
    avail = {"wind": [0.8, 0.6, 0.5, 0.9, 0.7, 0.4, 0.85, 0.3],
             "solar": [0.1, 0.9, 0.6, 0.5, 0.8, 0.2, 0.7, 0.5]}
    return case, _series(np.ones(8), loads, availability=avail)


FIXTURES = {
    "case3": case3,
    "case5": case5,
    "case24": case24,
    "weak3": weak3,
    "weak3_two": lambda: weak3(two_failing=True),
    "blocking": blocking,
    "lowload": lowload,
}


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    for name, build in FIXTURES.items():
        case, series = build()
        save_case(DATA / f"{name}.json", case, series)
        print(f"wrote {name}.json")


if __name__ == "__main__":
    main()
