#!/usr/bin/env python3
"""Regenerates the checked-in scenario files.

Run from the repository root:  python3 scenarios/generate.py
"""
import json
import math
import os

OUT = os.path.dirname(os.path.abspath(__file__))

SLOTS_PER_DAY = 48  # 30-minute slots


def tou_retail(slot):
    hour = slot * 0.5
    if hour < 6:
        return 0.18
    if hour < 16:
        return 0.24
    if hour < 21:
        return 0.34
    return 0.20


def pv_shape(slot, peak_kwh):
    """Solar bell between 07:00 and 19:00."""
    hour = slot * 0.5
    if hour < 7 or hour > 19:
        return 0.0
    x = (hour - 7.0) / 12.0
    return round(peak_kwh * math.sin(math.pi * x) ** 2, 3)


def home_load(slot, base_kwh, evening_kwh):
    hour = slot * 0.5
    load = base_kwh
    if 6 <= hour < 9:
        load += 0.3 * evening_kwh
    if 17 <= hour < 22:
        load += evening_kwh
    return round(load, 3)


def prosumer(pid, feeder, node, kind):
    demand = []
    generation = []
    for t in range(SLOTS_PER_DAY):
        if kind == "pv":
            demand.append(home_load(t, 0.25, 0.5))
            generation.append(pv_shape(t, 2.2))
        elif kind == "load":
            demand.append(home_load(t, 0.45, 1.1))
            generation.append(0.0)
        else:  # battery household with a small array
            demand.append(home_load(t, 0.35, 0.7))
            generation.append(pv_shape(t, 1.0))
    p = {
        "id": pid,
        "feeder": feeder,
        "node": node,
        "demand_kwh": demand,
        "generation_kwh": generation,
    }
    if kind == "battery":
        p["storage"] = {
            "capacity_kwh": 6.0,
            "soc_kwh": 3.0,
            "charge_rate_kw": 3.0,
            "discharge_rate_kw": 3.0,
            "charge_efficiency": 0.95,
            "discharge_efficiency": 0.95,
        }
    return p


def feeder(fid, r_per_hop, base_mva):
    return {
        "id": fid,
        "base_mva": base_mva,
        "v_source_pu": 1.0,
        "v_min_pu": 0.95,
        "v_max_pu": 1.05,
        "nodes": [
            {"id": "head", "r_pu": 0.0, "x_pu": 0.0},
            {"id": "n1", "parent": "head", "r_pu": r_per_hop, "x_pu": r_per_hop / 2},
            {"id": "n2", "parent": "n1", "r_pu": r_per_hop, "x_pu": r_per_hop / 2},
            {"id": "n3", "parent": "n2", "r_pu": r_per_hop, "x_pu": r_per_hop / 2},
        ],
    }


def desk(noisy_vpp2=False):
    slots = SLOTS_PER_DAY
    l2 = 2 * slots
    kinds = ["pv", "pv", "load", "load", "battery"]
    nodes = ["n3", "n2", "n1", "n2", "n3"]
    prosumers = []
    for i, (kind, node) in enumerate(zip(kinds, nodes)):
        prosumers.append(prosumer(f"P{i + 1:02d}", "F1", node, kind))
    for i, (kind, node) in enumerate(zip(kinds, nodes)):
        p = prosumer(f"P{i + 6:02d}", "F2", node, kind)
        if noisy_vpp2:
            p["generation_sigma"] = 0.3
        prosumers.append(p)
    return {
        "horizon_minutes": slots * 30,
        "seed": 42,
        "flags": {
            "p2p_enabled": True,
            "price_game_enabled": True,
            "vpp_enabled": True,
            "l3_enabled": True,
            "powerflow_enabled": True,
        },
        "mpc": {"horizon_slots": 24},
        "prices": {
            "utility_buy": [tou_retail(t) for t in range(slots)],
            "net_metering_sell": [0.05] * slots,
            "p2p_sell_ref": [0.10] * slots,
            "p2p_buy_ref": [round(tou_retail(t) - 0.02, 4) for t in range(slots)],
            "price_grid_step": 0.01,
        },
        "feeders": [feeder("F1", 0.004, 0.05), feeder("F2", 0.004, 0.05)],
        "prosumers": prosumers,
        "vpps": [
            {"id": "V1", "feeders": ["F1"], "safety_k": 0.0, "offer_discount": 0.9},
            {"id": "V2", "feeders": ["F2"], "safety_k": 0.0, "offer_discount": 0.8},
        ],
        "ancillary": {
            "clearing_price": [0.12] * l2,
            "capacity_kwh": [2.0] * l2,
            "penalty_multiplier": 2.0,
        },
        "noise": {"sigma": 0.0},
    }


def minimal():
    slots = 2  # one hour
    return {
        "horizon_minutes": 60,
        "seed": 7,
        "prices": {
            "utility_buy": [0.30, 0.30],
            "net_metering_sell": [0.05, 0.05],
            "price_grid_step": 0.01,
        },
        "feeders": [
            {
                "id": "F1",
                "nodes": [
                    {"id": "head", "r_pu": 0.0, "x_pu": 0.0},
                    {"id": "n1", "parent": "head", "r_pu": 0.01, "x_pu": 0.005},
                ],
            }
        ],
        "prosumers": [
            {
                "id": "SELLER",
                "feeder": "F1",
                "node": "n1",
                "demand_kwh": [0.2, 0.2],
                "generation_kwh": [1.5, 1.2],
            },
            {
                "id": "BUYER",
                "feeder": "F1",
                "node": "n1",
                "demand_kwh": [1.0, 1.0],
                "generation_kwh": [0.0, 0.0],
            },
        ],
        "vpps": [{"id": "V1", "feeders": ["F1"], "safety_k": 0.0, "offer_discount": 0.9}],
        "ancillary": {
            "clearing_price": [0.12, 0.12, 0.12, 0.12],
            "capacity_kwh": [5.0, 5.0, 5.0, 5.0],
            "penalty_multiplier": 2.0,
        },
        "noise": {"sigma": 0.0},
    }


def stress_feeder():
    """Strong midday export on a weak feeder: exercises the voltage screen
    and curtailment-driven deviation settlement."""
    slots = 8  # four hours around midday
    prosumers = []
    for i in range(3):
        prosumers.append(
            {
                "id": f"G{i + 1}",
                "feeder": "F1",
                "node": "n3" if i == 0 else ("n2" if i == 1 else "n1"),
                "demand_kwh": [0.1] * slots,
                "generation_kwh": [3.5] * slots,
            }
        )
    prosumers.append(
        {
            "id": "LOAD",
            "feeder": "F1",
            "node": "n1",
            "demand_kwh": [0.8] * slots,
            "generation_kwh": [0.0] * slots,
        }
    )
    return {
        "horizon_minutes": slots * 30,
        "seed": 11,
        "prices": {
            "utility_buy": [0.30] * slots,
            "net_metering_sell": [0.05] * slots,
            "price_grid_step": 0.01,
        },
        "feeders": [feeder("F1", 0.05, 0.01)],
        "prosumers": prosumers,
        "vpps": [{"id": "V1", "feeders": ["F1"], "safety_k": 0.0, "offer_discount": 0.9}],
        "ancillary": {
            "clearing_price": [0.12] * (2 * slots),
            "capacity_kwh": [2.0] * (2 * slots),
            "penalty_multiplier": 2.0,
        },
        "noise": {"sigma": 0.0},
    }


def write(name, obj):
    path = os.path.join(OUT, name)
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")
    print("wrote", path)


if __name__ == "__main__":
    write("desk.json", desk())
    write("desk_shortfall.json", desk(noisy_vpp2=True))
    write("minimal.json", minimal())
    write("stress_feeder.json", stress_feeder())
