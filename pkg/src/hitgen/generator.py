"""The staged HiT generator: configuration, presets, parameters and sampling."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .attention import (MODES, AttentionWeights, attention_block, balance_patch_size, blocked_attention,
                        cross_attention_mqa)
from .blocking import block, nearest_upsample, pixel_shuffle, unblock
from .numerics import ops
from .numerics.nn import Linear, MlpWeights, NormParams, NormState
from .numerics.tensor import Tensor

PE_STD = 0.02


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SelfAttnSpec:
    dim: int
    heads: int
    repeats: int
    block_size: int | None = None  # None: balanced choice
    mode: str = "multi_axis"


@dataclass(frozen=True)
class MlpSpec:
    dim: int
    repeats: int


@dataclass(frozen=True)
class StageSpec:
    resolution: int
    kind: str  # "low_res" | "high_res"
    cross_dim: int
    cross_heads: int
    self_attn: SelfAttnSpec | None = None
    mlp: MlpSpec | None = None
    tail: str = "pixel_shuffle"  # "pixel_shuffle" | "linear"
    tail_dim: int = 3

    @property
    def dim(self) -> int:
        return self.cross_dim

    def patch_size(self) -> int | None:
        if self.self_attn is None:
            return None
        return self.self_attn.block_size or balance_patch_size(self.resolution, self.resolution)


@dataclass(frozen=True)
class GeneratorConfig:
    name: str
    latent_dim: int
    stages: tuple[StageSpec, ...]
    latent_channels: int  # C_Z of the latent embedding
    latent_grid: int = 8  # latent embedding is latent_grid x latent_grid
    initial_size: int = 8
    mlp_ratio: int = 4
    norm: str = "batch"
    cross_mlp: bool = True
    seed: int = 0

    @property
    def resolution(self) -> int:
        return self.stages[-1].resolution

    def replace(self, **changes) -> "GeneratorConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        if not self.stages:
            raise ConfigError("generator needs at least one stage")
        if self.norm not in ("batch", "layer"):
            raise ConfigError(f"unknown norm {self.norm!r}")
        if self.stages[0].resolution != self.initial_size:
            raise ConfigError(f"first stage runs at {self.stages[0].resolution}, initial feature is "
                              f"{self.initial_size}")
        seen_high = False
        for i, st in enumerate(self.stages):
            where = f"stage {i + 1}"
            if i and st.resolution != 2 * self.stages[i - 1].resolution:
                raise ConfigError(f"{where}: resolution must double from the previous stage")
            if st.kind not in ("low_res", "high_res"):
                raise ConfigError(f"{where}: unknown kind {st.kind!r}")
            if st.kind == "high_res":
                seen_high = True
                if st.self_attn is not None or st.mlp is None:
                    raise ConfigError(f"{where}: high-resolution stages use MLPs only")
            elif seen_high:
                raise ConfigError(f"{where}: low-resolution stage after a high-resolution one")
            if st.kind == "low_res" and st.self_attn is None and st.mlp is None:
                raise ConfigError(f"{where}: low-resolution stage needs self-attention or an MLP")
            if st.cross_dim % st.cross_heads:
                raise ConfigError(f"{where}: dim {st.cross_dim} not divisible by {st.cross_heads} heads")
            if st.self_attn is not None:
                sa = st.self_attn
                if sa.dim != st.cross_dim:
                    raise ConfigError(f"{where}: self-attention dim differs from the stage dim")
                if sa.mode not in MODES:
                    raise ConfigError(f"{where}: unknown attention mode {sa.mode!r}")
                if sa.mode in ("multi_axis", "axial") and sa.heads % 2:
                    raise ConfigError(f"{where}: multi-axis attention needs an even head count")
                if sa.dim % sa.heads:
                    raise ConfigError(f"{where}: dim {sa.dim} not divisible by {sa.heads} heads")
                p = st.patch_size()
                if st.resolution % p:
                    raise ConfigError(f"{where}: block size {p} does not divide {st.resolution}")
            if st.mlp is not None and st.mlp.dim != st.cross_dim:
                raise ConfigError(f"{where}: MLP dim differs from the stage dim")
            last = i == len(self.stages) - 1
            if last:
                if st.kind != "high_res" or st.tail != "linear" or st.tail_dim != 3:
                    raise ConfigError("final stage must be high-resolution with a linear 3-d tail")
            else:
                if st.tail != "pixel_shuffle":
                    raise ConfigError(f"{where}: only the final stage may end with a linear 3-d tail")
                if st.cross_dim % 4:
                    raise ConfigError(f"{where}: pixel shuffle needs a dim divisible by 4")
                if st.tail_dim != self.stages[i + 1].cross_dim:
                    raise ConfigError(f"{where}: tail emits {st.tail_dim}-d, next stage expects "
                                      f"{self.stages[i + 1].cross_dim}")


# -- presets -----------------------------------------------------------------------

def _table(name, rows, latent_dim=512, latent_channels=256) -> GeneratorConfig:
    """Rows: (input size, dim, heads, block size, repeats, tail dim); block None marks MLP stages."""
    stages = []
    for i, (res, dim, heads, blk, reps, tail_dim) in enumerate(rows):
        last = i == len(rows) - 1
        tail = ("linear", 3) if last else ("pixel_shuffle", tail_dim)
        if blk is None:
            stages.append(StageSpec(res, "high_res", dim, heads, mlp=MlpSpec(dim, reps),
                                    tail=tail[0], tail_dim=tail[1]))
        else:
            stages.append(StageSpec(res, "low_res", dim, heads, self_attn=SelfAttnSpec(dim, heads, reps, blk),
                                    tail=tail[0], tail_dim=tail[1]))
    return GeneratorConfig(name, latent_dim, tuple(stages), latent_channels)


_HIT_S = [(8, 512, 16, 4, 2, 256), (16, 256, 8, 4, 2, 128), (32, 128, 4, 8, 1, 64), (64, 64, 4, 8, 1, 32),
          (128, 32, 4, None, 1, 32), (256, 32, 4, None, 1, 3)]
_HIT_B = [(8, 512, 16, 4, 2, 512), (16, 512, 8, 4, 2, 256), (32, 256, 4, 8, 2, 128), (64, 128, 4, 8, 2, 64),
          (128, 64, 4, None, 1, 64), (256, 64, 4, None, 1, 3)]
_HIT_L = [(8, 1024, 16, 4, 2, 512), (16, 512, 8, 4, 2, 256), (32, 256, 4, 8, 2, 128),
          (64, 128, 4, 8, 2, 128), (128, 128, 4, None, 2, 128), (256, 128, 4, None, 2, 3)]
_HIT_B_1024 = _HIT_B[:5] + [(256, 64, 4, None, 1, 32), (512, 32, 4, None, 1, 32), (1024, 32, 4, None, 1, 3)]

# desk-scale configurations for tests, training and the CLI
_TOY_32 = GeneratorConfig(
    "toy_32", latent_dim=16, latent_channels=8,
    stages=(StageSpec(8, "low_res", 16, 4, self_attn=SelfAttnSpec(16, 4, 1, 4), tail_dim=16),
            StageSpec(16, "high_res", 16, 4, mlp=MlpSpec(16, 1), tail_dim=16),
            StageSpec(32, "high_res", 16, 4, mlp=MlpSpec(16, 1), tail="linear", tail_dim=3)))
_TOY_8 = GeneratorConfig(
    "toy_8", latent_dim=16, latent_channels=8, initial_size=4,
    stages=(StageSpec(4, "low_res", 32, 4, self_attn=SelfAttnSpec(32, 4, 1, 2), tail_dim=32),
            StageSpec(8, "high_res", 32, 4, mlp=MlpSpec(32, 1), tail="linear", tail_dim=3)))

PRESETS: dict[str, GeneratorConfig] = {
    "hit_s_256": _table("hit_s_256", _HIT_S),
    "hit_b_256": _table("hit_b_256", _HIT_B),
    "hit_l_256": _table("hit_l_256", _HIT_L),
    "hit_b_1024": _table("hit_b_1024", _HIT_B_1024),
    "hit_imagenet_128": _table("hit_imagenet_128", _HIT_L[:4] + [(128, 128, 4, None, 2, 3)], latent_dim=256),
    "toy_32": _TOY_32,
    "toy_8": _TOY_8,
}

# reported parameter counts in millions, where published
REFERENCE_PARAMS_M = {"hit_s_256": 38.01, "hit_b_256": 46.22, "hit_l_256": 97.46}


def preset(name: str) -> GeneratorConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def with_attention_stages(config: GeneratorConfig, count: int) -> GeneratorConfig:
    """Keep self-attention in the first ``count`` low-resolution stages; the rest become MLP-only."""
    stages = []
    for i, st in enumerate(config.stages):
        if st.self_attn is not None and i >= count:
            st = dataclasses.replace(st, self_attn=None, mlp=MlpSpec(st.cross_dim, st.self_attn.repeats))
        stages.append(st)
    return config.replace(stages=tuple(stages), name=f"{config.name}_attn{count}")


def with_attention_mode(config: GeneratorConfig, mode: str) -> GeneratorConfig:
    stages = tuple(dataclasses.replace(st, self_attn=dataclasses.replace(st.self_attn, mode=mode))
                   if st.self_attn else st for st in config.stages)
    return config.replace(stages=stages, name=f"{config.name}_{mode}")


def describe(config: GeneratorConfig) -> list[str]:
    """One line per module in a compact stage-by-stage notation."""
    lines = [f"latent {config.latent_dim}-d -> {config.initial_size}x{config.initial_size}"
             f"x{config.stages[0].cross_dim}; latent embedding {config.latent_grid}x{config.latent_grid}"
             f"x{config.latent_channels}"]
    for i, st in enumerate(config.stages):
        pre = f"stage {i + 1} @{st.resolution}"
        lines.append(f"{pre} (dim {st.cross_dim}, head {st.cross_heads}) x1")
        if st.self_attn is not None:
            sa = st.self_attn
            p = st.patch_size()
            lines.append(f"{pre} {{block sz. {p}x{p}, dim {sa.dim}, head {sa.heads}}} x{sa.repeats}"
                         + ("" if sa.mode == "multi_axis" else f" [{sa.mode}]"))
        if st.mlp is not None:
            lines.append(f"{pre} |dim {st.mlp.dim}| x{st.mlp.repeats}")
        if st.tail == "pixel_shuffle":
            lines.append(f"{pre} pixel shuffle, {st.tail_dim}-d")
        else:
            lines.append(f"{pre} linear, {st.tail_dim}-d")
    return lines


# -- parameters ----------------------------------------------------------------------

@dataclass
class BlockParams:
    norm1: NormParams
    inner: AttentionWeights | None = None
    norm2: NormParams | None = None
    mlp: MlpWeights | None = None


@dataclass
class StageParams:
    pos_x: Tensor
    cross: BlockParams
    self_blocks: list[BlockParams] = field(default_factory=list)
    mlp_blocks: list[BlockParams] = field(default_factory=list)
    rgb: Linear | None = None
    tail: Linear | None = None


@dataclass
class GeneratorParams:
    config: GeneratorConfig
    latent_x: Linear
    latent_z: Linear
    pos_z: Tensor
    stages: list[StageParams]

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from _walk(self, "")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def norm_states(self) -> list[NormState]:
        return list(_walk_states(self))


def _walk(obj, prefix):
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from _walk(item, f"{prefix}.{i}")
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, (GeneratorConfig, NormState)):
        for f in dataclasses.fields(obj):
            val = getattr(obj, f.name)
            if val is not None:
                yield from _walk(val, f"{prefix}.{f.name}" if prefix else f.name)


def _walk_states(obj):
    if isinstance(obj, NormState):
        yield obj
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            yield from _walk_states(item)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, GeneratorConfig):
        for f in dataclasses.fields(obj):
            yield from _walk_states(getattr(obj, f.name))


class _Init:
    """Allocates parameters in a fixed order from one seeded stream.

    With ``shapes_only`` every tensor is a zero-stride view, so the full
    inventory of a large preset can be counted without allocating it.
    """

    def __init__(self, seed: int, dtype=np.float64, shapes_only: bool = False):
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.shapes_only = shapes_only

    def _empty(self, shape):
        return Tensor(np.broadcast_to(np.zeros((), dtype=self.dtype), shape), requires_grad=True)

    def trunc_normal(self, shape, std):
        if self.shapes_only:
            return self._empty(shape)
        x = self.rng.standard_normal(shape)
        bad = np.abs(x) > 2.0
        while bad.any():
            x[bad] = self.rng.standard_normal(int(bad.sum()))
            bad = np.abs(x) > 2.0
        return Tensor((x * std).astype(self.dtype), requires_grad=True)

    def weight(self, shape, fan_in):
        return self.trunc_normal(shape, 1.0 / math.sqrt(fan_in))

    def const(self, shape, value):
        if self.shapes_only:
            return self._empty(shape)
        return Tensor(np.full(shape, value, dtype=self.dtype), requires_grad=True)

    def linear(self, d_in, d_out):
        return Linear(self.weight((d_in, d_out), d_in), self.const((d_out,), 0.0))

    def norm(self, d):
        state = NormState(d)
        if not self.shapes_only:
            state.populate(self.dtype)
        return NormParams(self.const((d,), 1.0), self.const((d,), 0.0), state)

    def mlp(self, d, ratio):
        hidden = d * ratio
        return MlpWeights(self.weight((d, hidden), d), self.const((hidden,), 0.0),
                          self.weight((hidden, d), hidden), self.const((d,), 0.0))

    def attention(self, d, heads, kv_dim):
        k = d // heads
        return AttentionWeights(self.weight((heads, d, k), d), self.weight((kv_dim, k), kv_dim),
                                self.weight((kv_dim, k), kv_dim), self.weight((heads, d, k), heads * k))


def _allocate(config: GeneratorConfig, init: _Init) -> GeneratorParams:
    config.validate()
    s0, c0 = config.initial_size, config.stages[0].cross_dim
    grid, cz = config.latent_grid, config.latent_channels
    latent_x = init.linear(config.latent_dim, s0 * s0 * c0)
    latent_z = init.linear(config.latent_dim, grid * grid * cz)
    pos_z = init.trunc_normal((grid * grid, cz), PE_STD)
    stages = []
    for st in config.stages:
        d = st.cross_dim
        cross = BlockParams(init.norm(d), init.attention(d, st.cross_heads, cz))
        if config.cross_mlp:
            cross.norm2, cross.mlp = init.norm(d), init.mlp(d, config.mlp_ratio)
        sp = StageParams(init.trunc_normal((st.resolution, st.resolution, d), PE_STD), cross)
        if st.self_attn is not None:
            for _ in range(st.self_attn.repeats):
                sp.self_blocks.append(BlockParams(init.norm(d), init.attention(d, st.self_attn.heads, d),
                                                  init.norm(d), init.mlp(d, config.mlp_ratio)))
        if st.mlp is not None:
            for _ in range(st.mlp.repeats):
                sp.mlp_blocks.append(BlockParams(init.norm(d), mlp=init.mlp(d, config.mlp_ratio)))
        if st.kind == "high_res":
            sp.rgb = init.linear(d, 3)
        if st.tail == "pixel_shuffle":
            sp.tail = init.linear(d // 4, st.tail_dim)
        stages.append(sp)
    return GeneratorParams(config, latent_x, latent_z, pos_z, stages)


def build_generator(config: GeneratorConfig, seed: int | None = None, dtype=np.float64) -> GeneratorParams:
    """Allocate and initialize every weight deterministically from ``seed``."""
    return _allocate(config, _Init(config.seed if seed is None else seed, dtype))


def param_count(config: GeneratorConfig) -> int:
    return sum(t.size for t in _allocate(config, _Init(0, shapes_only=True)).parameters())


def param_breakdown(config: GeneratorConfig) -> dict[str, int]:
    """Parameter counts grouped as latent projections and per stage."""
    params = _allocate(config, _Init(0, shapes_only=True))
    groups: dict[str, int] = {}
    for name, t in params.named_parameters():
        head = name.split(".")[0]
        key = f"stage {int(name.split('.')[1]) + 1}" if head == "stages" else "latent"
        groups[key] = groups.get(key, 0) + t.size
    return groups


# -- generation ----------------------------------------------------------------------

def _stage_forward(x: Tensor, z_emb: Tensor, params: GeneratorParams, i: int, mode: str) -> Tensor:
    cfg = params.config
    st, sp = cfg.stages[i], params.stages[i]
    b, r, d = x.shape[0], st.resolution, st.cross_dim
    norm = cfg.norm

    x = x + sp.pos_x
    cross = sp.cross
    flat = attention_block(ops.reshape(x, (b, r * r, d)),
                           lambda t: cross_attention_mqa(t, z_emb, params.pos_z, cross.inner),
                           norm, cross.norm1, cross.norm2, cross.mlp, mode)
    x = ops.reshape(flat, (b, r, r, d))

    if st.self_attn is not None:
        amode = st.self_attn.mode
        blocked = None if amode == "axial" else block(x, st.patch_size())
        work = x if blocked is None else blocked.data
        for j, bp in enumerate(sp.self_blocks):
            layer_mode = amode
            if amode == "interleaved":
                layer_mode = "regional_only" if j % 2 == 0 else "dilated_only"
            work = attention_block(work, lambda t, w=bp.inner, lm=layer_mode: blocked_attention(t, t, w, lm),
                                   norm, bp.norm1, bp.norm2, bp.mlp, mode)
        x = work if blocked is None else unblock(blocked.with_data(work))
    for bp in sp.mlp_blocks:
        x = x + bp.mlp(bp.norm1(x, norm, mode))
    return x


def generate(params: GeneratorParams, z, mode: str = "eval") -> Tensor:
    """Map latent codes ``[b, latent_dim]`` (or one ``[latent_dim]`` code) to images ``[b, H, W, 3]``."""
    cfg = params.config
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=params.pos_z.dtype))
    if z.ndim == 1:
        z = ops.reshape(z, (1, z.shape[0]))
    if z.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ConfigError(f"latent code shape {z.shape} does not match latent dim {cfg.latent_dim}")
    if not np.all(np.isfinite(z.data)):
        raise FloatingPointError("latent code has non-finite entries")
    b = z.shape[0]
    s0, c0 = cfg.initial_size, cfg.stages[0].cross_dim
    x = ops.reshape(params.latent_x(z), (b, s0, s0, c0))
    z_emb = ops.reshape(params.latent_z(z), (b, cfg.latent_grid ** 2, cfg.latent_channels))

    image = None
    for i, st in enumerate(cfg.stages):
        x = _stage_forward(x, z_emb, params, i, mode)
        sp = params.stages[i]
        if st.kind == "high_res":
            rgb = sp.rgb(x)
            image = rgb if image is None else nearest_upsample(image) + rgb
        if sp.tail is not None:
            x = sp.tail(pixel_shuffle(x))
        if not np.all(np.isfinite(x.data)):
            raise FloatingPointError(f"non-finite activations after stage {i + 1}")
    return image


def sample_latent(config: GeneratorConfig, seed: int, dtype=np.float64) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(config.latent_dim).astype(dtype)


def interpolate(params: GeneratorParams, z_a, z_b, steps: int, mode: str = "eval") -> list[Tensor]:
    """Images along the straight line from ``z_a`` to ``z_b`` at uniform ``t`` in [0, 1]."""
    if steps < 2:
        raise ValueError("interpolation needs at least 2 steps")
    z_a = np.asarray(z_a.data if isinstance(z_a, Tensor) else z_a)
    z_b = np.asarray(z_b.data if isinstance(z_b, Tensor) else z_b)
    out = []
    for t in np.linspace(0.0, 1.0, steps):
        out.append(generate(params, (1.0 - t) * z_a + t * z_b, mode))
    return out
