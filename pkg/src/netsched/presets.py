"""Benchmark plants (sampling time 0.05) with reference gains and certificates."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .certify import DEFAULT_KAPPA, StabilityCertificate
from .model import NcsConfig, PlantModel
from .params import ScheduleParameters

BATCH_REACTOR = {
    "A": [
        [1.0795, -0.0045, 0.2896, -0.2367],
        [-0.0272, 0.8101, -0.0032, 0.0323],
        [0.0447, 0.1886, 0.7317, 0.2354],
        [0.0010, 0.1888, 0.0545, 0.9115],
    ],
    "B": [
        [0.0006, -0.0239],
        [0.2567, 0.0002],
        [0.0837, -0.1346],
        [0.0837, -0.0046],
    ],
    "K": [
        [0.0152761, -0.8159748, -0.2394377, -0.7514747],
        [2.3245781, 0.0798596, 1.622477, -1.0654847],
    ],
    "P_s": [
        [974.82022, 115.25221, 693.51383, -223.88521],
        [115.25221, 1022.0729, 160.38138, 109.95335],
        [693.51383, 160.38138, 768.15463, -219.94088],
        [-223.88521, 109.95335, -219.94088, 1250.1576],
    ],
    "P_u": [
        [1678.8234, 300.05968, 1271.4766, -378.75625],
        [300.05968, 1465.4904, 391.07683, 368.29291],
        [1271.4766, 391.07683, 1213.8238, -279.44358],
        [-378.75625, 368.29291, -279.44358, 1483.7789],
    ],
    "Y": [
        [0.0005645, -0.0006647, -0.0008519, -0.0005914],
        [0.0024236, -0.0001203, -0.0001764, -0.0004387],
    ],
    "R_s": [
        [-51.553004, -7.8596573, -69.500984, -13.199701],
        [-7.8596573, -480.12758, -40.530729, 37.248709],
        [-69.500984, -40.530729, -230.28674, 106.35376],
        [-13.199701, 37.248709, 106.35376, -300.5394],
    ],
    "R_u": [
        [-48.482389, 0.1252562, -62.165288, -15.778984],
        [0.1252562, -428.29213, -25.838462, 53.124646],
        [-62.165288, -25.838462, -182.71532, 86.522247],
        [-15.778984, 53.124646, 86.522247, -289.02844],
    ],
}

INVERTED_PENDULUM = {
    "A": [[1.0123, 0.0502], [0.4920, 1.0123]],
    "B": [[0.0123], [0.4920]],
    "K": [[-2.3973087, -1.4308615]],
    "P_s": [[1717.7113, 138.39564], [138.39564, 50.218134]],
    "P_u": [[2580.3612, 512.67656], [512.67656, 184.31981]],
    "Y": [[0.0011569, -0.0316812]],
    "R_s": [[-26.390428, -3.0495068], [-3.0495068, -30.242636]],
    "R_u": [[-25.479355, -3.4282391], [-3.4282391, -25.646787]],
}

_PLANTS = {"batch-reactor": BATCH_REACTOR, "inverted-pendulum": INVERTED_PENDULUM}
NAMES = ("batch-reactor", "inverted-pendulum", "experiment1")


@dataclass(frozen=True, eq=False)
class Preset:
    name: str
    plants: tuple
    M: Optional[int] = None
    params: Optional[ScheduleParameters] = None
    certificates: dict = field(default_factory=dict)
    Y: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    @property
    def config(self) -> NcsConfig:
        if self.M is None:
            raise ValueError(f"preset {self.name!r} is a single plant, not a network")
        return NcsConfig(plants=self.plants, M=self.M)


def _plant(index: int, data: dict) -> PlantModel:
    return PlantModel(index, data["A"], data["B"], data["K"])


def _extras(index: int, data: dict, p: Fraction):
    cert = StabilityCertificate(p, data["P_s"], data["P_u"], DEFAULT_KAPPA)
    res = (np.array(data["R_s"]), np.array(data["R_u"]))
    return cert, np.array(data["Y"]), res


def preset(name: str) -> Preset:
    half = Fraction(1, 2)
    if name in _PLANTS:
        data = _PLANTS[name]
        cert, Y, res = _extras(1, data, half)
        return Preset(name, (_plant(1, data),), certificates={1: cert}, Y={1: Y}, residuals={1: res})
    if name == "experiment1":
        plants, certs, Ys, res = [], {}, {}, {}
        for i, key in enumerate(("batch-reactor", "inverted-pendulum"), start=1):
            data = _PLANTS[key]
            plants.append(_plant(i, data))
            certs[i], Ys[i], res[i] = _extras(i, data, half)
        params = ScheduleParameters.from_lists([[1], [2]], [half, half])
        return Preset(name, tuple(plants), 1, params, certs, Ys, res)
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(NAMES)}")
