"""Desk-scale synthetic benchmark used by the acceptance suite and the CLI.

A 64x64x16 four-endmember scene is blurred with an 8x8 kernel, decimated
by 8, and spectrally reduced to 4 bands with Gaussian-bump responses that
carry a 0.05 tail floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degradation import (
    Geometry,
    ObservedPair,
    SceneFactors,
    SceneSpec,
    SrfProfile,
    average_kernel,
    degrade_pair,
    gaussian_kernel,
    synth_scene_factors,
    synth_srf,
)

SIZE = 64
HSI_BANDS = 16
MSI_BANDS = 4
RATIO = 8
ENDMEMBERS = 4
SRF_FLOOR = 0.05


@dataclass
class Benchmark:
    scene: SceneFactors
    kernel: np.ndarray
    srf: np.ndarray
    geometry: Geometry
    pair: ObservedPair

    @property
    def truth(self) -> np.ndarray:
        return self.scene.cube


def make_benchmark(kernel: str = "gaussian", overlap: str = "full", seed: int = 0) -> Benchmark:
    if kernel == "gaussian":
        psf = gaussian_kernel(RATIO, 2.0)
    elif kernel == "average":
        psf = average_kernel(RATIO)
    else:
        raise ValueError(f"unknown benchmark kernel {kernel!r}")
    scene = synth_scene_factors(SceneSpec(SIZE, SIZE, HSI_BANDS, ENDMEMBERS, seed=seed))
    srf = synth_srf(HSI_BANDS, MSI_BANDS, SrfProfile(overlap=overlap, floor=SRF_FLOOR), seed=seed)
    geometry = Geometry(RATIO)
    return Benchmark(scene, psf, srf, geometry, degrade_pair(scene.cube, psf, srf, geometry))
