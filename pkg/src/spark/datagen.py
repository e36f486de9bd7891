"""Synthetic real/fake sample generation with band-localized artifacts.

"Real" samples are smooth random fields (low-frequency sinusoids plus a
little white noise). Each fake profile injects one artifact kind into one
of the four normalized-frequency bands of the image, so fake families have
characteristic, band-localized spectral signatures. Everything is a pure
function of (profile, seed, image_size).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import IngestionError, InvalidInputError

ARTIFACT_KINDS = ("periodic-grid", "band-noise", "checkerboard")


@dataclass(frozen=True)
class GeneratorProfile:
    name: str
    artifact_band: int = 3
    artifact_strength: float = 0.3
    artifact_kind: str = "checkerboard"

    def __post_init__(self):
        if self.artifact_band not in (0, 1, 2, 3):
            raise InvalidInputError(f"artifact_band must be 0..3, got {self.artifact_band}")
        if self.artifact_strength < 0:
            raise InvalidInputError("artifact_strength must be >= 0")
        if self.artifact_kind not in ARTIFACT_KINDS:
            raise InvalidInputError(f"unknown artifact kind {self.artifact_kind!r}")


@dataclass(frozen=True)
class Sample:
    pixels: np.ndarray  # flattened, image_size^2 * channels, in [0,1]
    label: int
    generator_id: str
    sample_id: str


# default desk-scale profiles: train pair shares artifact bands with the
# held-out pair so cross-generator transfer has signal to use
DEFAULT_PROFILES = {
    "pg": GeneratorProfile("pg", artifact_band=3, artifact_strength=0.45, artifact_kind="checkerboard"),
    "cg": GeneratorProfile("cg", artifact_band=2, artifact_strength=0.45, artifact_kind="band-noise"),
    "ld": GeneratorProfile("ld", artifact_band=3, artifact_strength=0.60, artifact_kind="band-noise"),
    "gl": GeneratorProfile("gl", artifact_band=2, artifact_strength=0.55, artifact_kind="band-noise"),
}

# sigma of the additive pixel noise used for "sensor-noise" real samples
SENSOR_NOISE_SIGMA = 0.15


def _real_field(rng: np.random.Generator, size: int, channels: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, channels))
    for c in range(channels):
        field = np.zeros((size, size))
        for _ in range(4):
            fx, fy = rng.uniform(0.2, 2.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            field += amp * np.sin(2 * np.pi * (fx * x + fy * y) / size + phase)
        field = 0.5 + 0.11 * field
        field += rng.normal(0.0, 0.02, size=(size, size))
        img[:, :, c] = field
    return np.clip(img, 0.0, 1.0)


def _band_freq(band: int, size: int) -> float:
    """A representative cycles-per-pixel frequency inside a band.

    Band b covers normalized digital frequency [0.25*pi*b, 0.25*pi*(b+1)],
    i.e. cycles/pixel in [b/8, (b+1)/8].
    """
    return (band + 0.5) / 8.0


def _inject(img: np.ndarray, profile: GeneratorProfile, rng: np.random.Generator) -> np.ndarray:
    size = img.shape[0]
    # +/-30% amplitude jitter so a generator emits a band of strengths
    s = profile.artifact_strength * rng.uniform(0.7, 1.3)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    if profile.artifact_kind == "checkerboard":
        pattern = np.where((x + y) % 2 == 0, 1.0, -1.0)
    elif profile.artifact_kind == "periodic-grid":
        f = _band_freq(profile.artifact_band, size)
        pattern = 0.5 * (np.sin(2 * np.pi * f * x) + np.sin(2 * np.pi * f * y))
    else:  # band-noise: white noise bandpassed to the profile's band
        noise = rng.normal(0.0, 1.0, size=(size, size))
        spec = np.fft.fft2(noise)
        fy = np.abs(np.fft.fftfreq(size))[:, None]
        fx = np.abs(np.fft.fftfreq(size))[None, :]
        radial = np.maximum(fx, fy)
        lo, hi = profile.artifact_band / 8.0, (profile.artifact_band + 1) / 8.0
        mask = (radial >= lo) & (radial <= hi)
        band = np.real(np.fft.ifft2(spec * mask))
        sd = band.std()
        pattern = band / sd if sd > 0 else band
    out = img + s * pattern[:, :, None]
    return np.clip(out, 0.0, 1.0)


def gen_real(seed: int, image_size: int, channels: int = 3,
             noise: float = 0.0) -> Sample:
    """A synthetic real sample; noise > 0 adds sensor-style pixel noise."""
    if image_size < 4:
        raise InvalidInputError("image_size must be >= 4")
    if noise < 0:
        raise InvalidInputError("noise sigma must be >= 0")
    rng = np.random.default_rng([0x5EA1, seed])
    img = _real_field(rng, image_size, channels)
    px = img.reshape(-1)
    sid = f"real:{seed}"
    if noise > 0:
        nrng = np.random.default_rng([0x0153, seed])
        px = np.clip(px + nrng.normal(0.0, noise, px.shape), 0.0, 1.0)
        sid = f"real:{seed}:{noise:g}"
    return Sample(px, 0, "real", sid)


def gen_fake(profile: GeneratorProfile, seed: int, image_size: int, channels: int = 3) -> Sample:
    if image_size < 4:
        raise InvalidInputError("image_size must be >= 4")
    rng = np.random.default_rng([0x5EA1, seed])
    img = _real_field(rng, image_size, channels)
    art_rng = np.random.default_rng([0xFA4E, seed])
    img = _inject(img, profile, art_rng)
    label = 1 if profile.artifact_strength > 0 else 0
    # strength 0 is statistically a real sample; keep label consistent
    if profile.artifact_strength == 0:
        return Sample(img.reshape(-1), 0, profile.name, f"{profile.name}:{seed}")
    return Sample(img.reshape(-1), label, profile.name, f"{profile.name}:{seed}")


def bilinear_resize(img: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear interpolation on an (h, w, c) array, edge-clamped."""
    h, w, c = img.shape
    ys = (np.arange(out_size) + 0.5) * h / out_size - 0.5
    xs = (np.arange(out_size) + 0.5) * w / out_size - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def ingest_image(path, image_size: int, channels: int = 3) -> Sample:
    """Decode an 8-bit PNG (or other PIL-readable raster), resize, scale."""
    try:
        from PIL import Image
        with Image.open(path) as im:
            im = im.convert("RGB" if channels == 3 else "L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except Exception as exc:
        raise IngestionError(f"cannot ingest image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    resized = bilinear_resize(arr, image_size)
    return Sample(np.clip(resized, 0.0, 1.0).reshape(-1), 0, "file", str(path))


# -- manifest -----------------------------------------------------------

def write_manifest(path, samples_spec) -> None:
    """samples_spec: iterable of (sample_id, source, label, generator_id)."""
    with open(path, "w", encoding="utf-8") as f:
        for sid, src, label, gid in samples_spec:
            f.write(f"{sid}\t{src}\t{label}\t{gid}\n")


def synth_manifest_rows(profile_name: str, seeds, image_size: int) -> list[tuple]:
    rows = []
    for seed in seeds:
        if profile_name == "real":
            rows.append((f"real:{seed}", f"SYNTH:real:{seed}", 0, "real"))
        else:
            rows.append((f"{profile_name}:{seed}", f"SYNTH:{profile_name}:{seed}", 1, profile_name))
    return rows


def parse_synth_source(src: str, image_size: int, channels: int = 3,
                       profiles: dict[str, GeneratorProfile] | None = None) -> Sample:
    """Resolve a SYNTH:profile:seed[:strength] source into a generated sample.

    The optional fourth field overrides the profile's artifact strength; for
    the "real" profile it is the sensor-noise sigma instead.
    """
    if profiles is None:
        profiles = DEFAULT_PROFILES
    parts = src.split(":")
    if len(parts) not in (3, 4) or parts[0] != "SYNTH":
        raise IngestionError(
            f"bad synthetic source {src!r}; want SYNTH:profile:seed[:strength]")
    pname, seed_text = parts[1], parts[2]
    try:
        seed = int(seed_text)
    except ValueError as exc:
        raise IngestionError(f"bad seed in synthetic source {src!r}") from exc
    strength = None
    if len(parts) == 4:
        try:
            strength = float(parts[3])
        except ValueError as exc:
            raise IngestionError(f"bad strength in synthetic source {src!r}") from exc
        if strength < 0:
            raise IngestionError(f"negative strength in synthetic source {src!r}")
    if pname == "real":
        return gen_real(seed, image_size, channels,
                        noise=strength if strength is not None else 0.0)
    prof = profiles.get(pname)
    if prof is None:
        raise IngestionError(f"unknown profile {pname!r} in {src!r}")
    if strength is not None:
        prof = dataclasses.replace(prof, artifact_strength=strength)
    return gen_fake(prof, seed, image_size, channels)


def load_manifest(path, image_size: int, channels: int = 3,
                  profiles: dict[str, GeneratorProfile] | None = None) -> list[Sample]:
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise IngestionError(f"{path}:{lineno}: expected 4 tab-separated fields")
            sid, src, label, gid = parts
            label = int(label)
            try:
                if src.startswith("SYNTH:"):
                    s = parse_synth_source(src, image_size, channels, profiles)
                else:
                    s = ingest_image(src, image_size, channels)
            except IngestionError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
            samples.append(Sample(s.pixels, label, gid, sid))
    return samples
