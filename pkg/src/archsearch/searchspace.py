"""Integer-string encoding of the five-block inverted-bottleneck CNN space.

A genome is a length-46 integer vector::

    [r, d_1, k_11, e_11, ..., k_14, e_14, d_2, ..., d_5, k_51, e_51, ..., k_54, e_54]

``r`` indexes the input resolution (``192 + 4 * r``), ``d_b`` is the number of
layers in block ``b`` and every layer slot carries a (kernel code, expansion
code) pair.  Slots beyond ``d_b`` are zero padded so the length stays fixed.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterator, Sequence

import numpy as np

N_BLOCKS = 5
MAX_LAYERS = 4
GENOME_LENGTH = 1 + N_BLOCKS * (1 + 2 * MAX_LAYERS)

RESOLUTIONS = tuple(192 + 4 * r for r in range(17))
DEPTHS = (2, 3, 4)
KERNEL_SIZES = {1: 3, 2: 5, 3: 7}
EXPANSION_RATIOS = {1: 3, 2: 4, 3: 6}


class SearchSpaceError(ValueError):
    pass


class OutOfRangeGene(SearchSpaceError):
    def __init__(self, position: int, value: int):
        super().__init__(f"gene {position} has out-of-range value {value}")
        self.position = position
        self.value = value


class NonCanonical(SearchSpaceError):
    pass


class SpaceTooLarge(SearchSpaceError):
    pass


class ParseError(SearchSpaceError):
    def __init__(self, index: int, message: str):
        super().__init__(f"token {index}: {message}")
        self.index = index


def depth_position(block: int) -> int:
    """Index of the depth gene of ``block`` (0-based)."""
    return 1 + block * (1 + 2 * MAX_LAYERS)


def slot_positions(block: int, layer: int) -> tuple[int, int]:
    """Indices of the (kernel, expansion) genes of one layer slot."""
    base = depth_position(block) + 1 + 2 * layer
    return base, base + 1


def _position_kinds() -> list[str]:
    kinds = ["resolution"]
    for _ in range(N_BLOCKS):
        kinds.append("depth")
        kinds.extend(["kernel", "expansion"] * MAX_LAYERS)
    return kinds


POSITION_KINDS = tuple(_position_kinds())
# inclusive per-position code range of the full space; slots admit 0 (padding)
GENE_LOW = np.array([{"resolution": 0, "depth": 2}.get(k, 0) for k in POSITION_KINDS])
GENE_HIGH = np.array([{"resolution": 16, "depth": 4}.get(k, 3) for k in POSITION_KINDS])


@dataclass(frozen=True)
class BlockChoices:
    depths: tuple[int, ...] = DEPTHS
    kernel_codes: tuple[int, ...] = (1, 2, 3)
    expansion_codes: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        for name, values, legal in (
            ("depths", self.depths, DEPTHS),
            ("kernel_codes", self.kernel_codes, (1, 2, 3)),
            ("expansion_codes", self.expansion_codes, (1, 2, 3)),
        ):
            if not values or any(v not in legal for v in values):
                raise SearchSpaceError(f"illegal {name}: {values}")
            object.__setattr__(self, name, tuple(sorted(set(values))))

    def n_configurations(self) -> int:
        per_layer = len(self.kernel_codes) * len(self.expansion_codes)
        return sum(per_layer**d for d in self.depths)


@dataclass(frozen=True)
class SearchSpace:
    """Per-position choice sets; the default instance is the full space.

    Restricting a space shrinks the sets (e.g. to make it enumerable); every
    genome of a restricted space is also a genome of the full space.
    """

    resolution_codes: tuple[int, ...] = tuple(range(17))
    blocks: tuple[BlockChoices, ...] = field(
        default_factory=lambda: tuple(BlockChoices() for _ in range(N_BLOCKS))
    )

    def __post_init__(self):
        if len(self.blocks) != N_BLOCKS:
            raise SearchSpaceError(f"expected {N_BLOCKS} blocks, got {len(self.blocks)}")
        codes = tuple(sorted(set(self.resolution_codes)))
        if not codes or codes[0] < 0 or codes[-1] > 16:
            raise SearchSpaceError(f"illegal resolution codes: {self.resolution_codes}")
        object.__setattr__(self, "resolution_codes", codes)

    @classmethod
    def reduced(cls) -> "SearchSpace":
        """The enumerable 12,800-genome space used for exhaustive comparisons.

        Blocks 1 and 2 choose depth in {2, 3} and kernel/expansion codes in
        {1, 2}; blocks 3 to 5 are pinned to the middle choices, three layers
        of (k=5, e=4); the resolution is either 192 or 256.
        """
        free = BlockChoices(depths=(2, 3), kernel_codes=(1, 2), expansion_codes=(1, 2))
        pinned = BlockChoices(depths=(3,), kernel_codes=(2,), expansion_codes=(2,))
        return cls(resolution_codes=(0, 16), blocks=(free, free, pinned, pinned, pinned))

    def cardinality(self) -> int:
        n = len(self.resolution_codes)
        for b in self.blocks:
            n *= b.n_configurations()
        return n

    def legal_codes(self) -> list[np.ndarray]:
        """Active (non-padding) choices per gene position."""
        out = [np.array(self.resolution_codes)]
        for b in self.blocks:
            out.append(np.array(b.depths))
            for _ in range(MAX_LAYERS):
                out.append(np.array(b.kernel_codes))
                out.append(np.array(b.expansion_codes))
        return out

    def variable_positions(self) -> np.ndarray:
        """Positions that can take more than one value in this space."""
        var = [len(self.resolution_codes) > 1]
        for b in self.blocks:
            var.append(len(b.depths) > 1)
            for layer in range(MAX_LAYERS):
                for codes in (b.kernel_codes, b.expansion_codes):
                    values = set(codes) if layer < max(b.depths) else set()
                    if layer >= min(b.depths):
                        values.add(0)
                    var.append(len(values) > 1)
        return np.flatnonzero(var)

    def to_dict(self) -> dict:
        return {
            "resolution_codes": list(self.resolution_codes),
            "blocks": [
                {k: list(v) for k, v in asdict(b).items()} for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(
            resolution_codes=tuple(d["resolution_codes"]),
            blocks=tuple(
                BlockChoices(
                    depths=tuple(b["depths"]),
                    kernel_codes=tuple(b["kernel_codes"]),
                    expansion_codes=tuple(b["expansion_codes"]),
                )
                for b in d["blocks"]
            ),
        )

    # -- genome operations bound to this space --------------------------------

    def canonicalize(self, genome: Sequence[int]) -> np.ndarray:
        return canonicalize(genome, self)

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        return sample_uniform(rng, self, n)

    def contains(self, genome: Sequence[int]) -> bool:
        g = np.asarray(genome)
        try:
            return bool(np.array_equal(canonicalize(g, self), g))
        except SearchSpaceError:
            return False


FULL_SPACE = SearchSpace()


def canonicalize(genome: Sequence[int], space: SearchSpace = FULL_SPACE) -> np.ndarray:
    """Repair the zero-padding of ``genome``.

    Slots at or beyond a block's depth are zeroed and active slots holding a
    0 code get the smallest legal code.  Values outside the legal sets raise
    :class:`OutOfRangeGene`.
    """
    g = np.array(genome, dtype=np.int64)
    if g.shape != (GENOME_LENGTH,):
        raise SearchSpaceError(f"genome must have {GENOME_LENGTH} genes, got shape {g.shape}")
    bad = np.flatnonzero((g < GENE_LOW) | (g > GENE_HIGH))
    if bad.size:
        raise OutOfRangeGene(int(bad[0]), int(g[bad[0]]))
    if g[0] not in space.resolution_codes:
        raise OutOfRangeGene(0, int(g[0]))
    for b, choices in enumerate(space.blocks):
        dp = depth_position(b)
        depth = int(g[dp])
        if depth not in choices.depths:
            raise OutOfRangeGene(dp, depth)
        for layer in range(MAX_LAYERS):
            kp, ep = slot_positions(b, layer)
            if layer >= depth:
                g[kp] = g[ep] = 0
                continue
            for pos, legal in ((kp, choices.kernel_codes), (ep, choices.expansion_codes)):
                if g[pos] == 0:
                    g[pos] = legal[0]
                elif g[pos] not in legal:
                    raise OutOfRangeGene(pos, int(g[pos]))
    return g


@functools.lru_cache(maxsize=32)
def _validity_table(space: SearchSpace) -> np.ndarray:
    """Boolean (position, value) table of codes a non-canonical genome may hold."""
    table = np.zeros((GENOME_LENGTH, int(GENE_HIGH.max()) + 1), dtype=bool)
    for pos, codes in enumerate(space.legal_codes()):
        table[pos, codes] = True
        if POSITION_KINDS[pos] in ("kernel", "expansion"):
            table[pos, 0] = True
    table.setflags(write=False)
    return table


def canonicalize_batch(genomes: np.ndarray, space: SearchSpace = FULL_SPACE) -> np.ndarray:
    """Row-wise :func:`canonicalize` for an (n, 46) array."""
    g = np.array(genomes, dtype=np.int64, copy=True)
    if g.ndim != 2 or g.shape[1] != GENOME_LENGTH:
        raise SearchSpaceError(f"expected (n, {GENOME_LENGTH}) array, got shape {g.shape}")
    table = _validity_table(space)
    in_range = (g >= 0) & (g <= table.shape[1] - 1)
    ok = in_range & table[np.arange(GENOME_LENGTH), np.where(in_range, g, 0)]
    if not ok.all():
        row, pos = (int(i) for i in np.argwhere(~ok.T)[0][::-1])
        raise OutOfRangeGene(pos, int(g[row, pos]))
    for b, choices in enumerate(space.blocks):
        depth = g[:, depth_position(b)]
        for layer in range(MAX_LAYERS):
            active = layer < depth
            for pos, codes in zip(slot_positions(b, layer), (choices.kernel_codes, choices.expansion_codes)):
                col = g[:, pos]
                col[~active] = 0
                col[active & (col == 0)] = codes[0]
    return g


def is_canonical(genome: Sequence[int]) -> bool:
    g = np.asarray(genome)
    try:
        return bool(np.array_equal(canonicalize(g), g))
    except SearchSpaceError:
        return False


def sample_uniform(
    rng: np.random.Generator, space: SearchSpace = FULL_SPACE, n: int | None = None
) -> np.ndarray:
    """Draw canonical genomes; every legal code of each gene is equally likely.

    Returns one genome of shape (46,) when ``n`` is None, else an (n, 46) array.
    """
    m = 1 if n is None else n
    out = np.zeros((m, GENOME_LENGTH), dtype=np.int64)
    out[:, 0] = rng.choice(space.resolution_codes, size=m)
    for b, choices in enumerate(space.blocks):
        dp = depth_position(b)
        depth = rng.choice(choices.depths, size=m)
        out[:, dp] = depth
        for layer in range(MAX_LAYERS):
            kp, ep = slot_positions(b, layer)
            k = rng.choice(choices.kernel_codes, size=m)
            e = rng.choice(choices.expansion_codes, size=m)
            active = layer < depth
            out[:, kp] = np.where(active, k, 0)
            out[:, ep] = np.where(active, e, 0)
    return out[0] if n is None else out


def enumerate_space(space: SearchSpace, cap: int = 10**6) -> Iterator[np.ndarray]:
    """Yield every canonical genome of ``space`` exactly once."""
    total = space.cardinality()
    if total > cap:
        raise SpaceTooLarge(f"space has {total} genomes, cap is {cap}")

    def block_configs(choices: BlockChoices) -> list[list[int]]:
        configs = []
        layer_opts = list(itertools.product(choices.kernel_codes, choices.expansion_codes))
        for d in choices.depths:
            for layers in itertools.product(layer_opts, repeat=d):
                genes = [d]
                for k, e in layers:
                    genes += [k, e]
                genes += [0, 0] * (MAX_LAYERS - d)
                configs.append(genes)
        return configs

    per_block = [block_configs(c) for c in space.blocks]
    for r in space.resolution_codes:
        for combo in itertools.product(*per_block):
            yield np.array([r] + [gene for block in combo for gene in block], dtype=np.int64)


def enumerate_array(space: SearchSpace, cap: int = 10**6) -> np.ndarray:
    return np.array(list(enumerate_space(space, cap)), dtype=np.int64).reshape(-1, GENOME_LENGTH)


def log10_cardinality(space: SearchSpace) -> float:
    total = math.log10(len(space.resolution_codes))
    for b in space.blocks:
        total += math.log10(b.n_configurations())
    return total


# -- text form -----------------------------------------------------------------


def encode_text(genome: Sequence[int]) -> str:
    return "-".join(str(int(v)) for v in genome)


def decode_text(text: str, space: SearchSpace = FULL_SPACE) -> np.ndarray:
    tokens = text.strip().split("-")
    values = []
    for i, tok in enumerate(tokens):
        if not tok.isdigit():
            raise ParseError(i, f"not a non-negative integer: {tok!r}")
        values.append(int(tok))
    if len(values) != GENOME_LENGTH:
        raise ParseError(min(len(values), GENOME_LENGTH), f"expected {GENOME_LENGTH} fields, got {len(values)}")
    g = np.array(values, dtype=np.int64)
    try:
        canon = canonicalize(g, space)
    except OutOfRangeGene as exc:
        raise ParseError(exc.position, str(exc)) from exc
    if not np.array_equal(canon, g):
        diff = int(np.flatnonzero(canon != g)[0])
        raise ParseError(diff, "genome is not in canonical padded form")
    return g


# -- architecture description --------------------------------------------------


@dataclass(frozen=True)
class BackboneSpec:
    stem_channels: int = 16
    block_channels: tuple[int, ...] = (24, 40, 80, 112, 160)
    block_strides: tuple[bool, ...] = (True, True, True, False, True)
    head_channels: int = 1280
    n_classes: int = 1000

    def __post_init__(self):
        if len(self.block_channels) != N_BLOCKS or len(self.block_strides) != N_BLOCKS:
            raise SearchSpaceError("backbone must describe exactly five blocks")
        values = (self.stem_channels, *self.block_channels, self.head_channels, self.n_classes)
        if min(values) <= 0:
            raise SearchSpaceError("channel counts must be positive")
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        object.__setattr__(self, "block_strides", tuple(bool(s) for s in self.block_strides))


@dataclass(frozen=True)
class LatencyModel:
    """Affine latency proxy: ``per_madd * madds + per_layer * n_layers``.

    Units are milliseconds.  The defaults are placeholders in a plausible
    mobile-CPU / desktop-GPU regime, not measurements.
    """

    cpu_per_madd: float = 3.0e-8
    cpu_per_layer: float = 0.15
    gpu_per_madd: float = 4.0e-9
    gpu_per_layer: float = 0.35


@dataclass(frozen=True)
class ComplexityVector:
    madds: float
    params: float
    latency_cpu: float
    latency_gpu: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


COMPLEXITY_NAMES = ("madds", "params", "latency_cpu", "latency_gpu")


def _conv_out(size: int, stride: int) -> int:
    return -(-size // stride)


def layer_table(genome: Sequence[int], backbone: BackboneSpec = BackboneSpec()) -> list[dict]:
    """Per-convolution accounting of MAdds and weights.

    Each row has ``name``, ``madds`` and ``params``; the classifier row is a
    dense layer whose cost does not scale with resolution.
    """
    g = np.asarray(genome)
    if not is_canonical(g):
        raise NonCanonical(f"genome {encode_text(g)} violates the padding invariant")
    res = RESOLUTIONS[int(g[0])]
    rows = []
    size = _conv_out(res, 2)
    c_in = backbone.stem_channels
    rows.append({"name": "stem", "madds": size * size * 9 * 3 * c_in, "params": 9 * 3 * c_in})
    for b in range(N_BLOCKS):
        c_out = backbone.block_channels[b]
        depth = int(g[depth_position(b)])
        for layer in range(depth):
            kp, ep = slot_positions(b, layer)
            k = KERNEL_SIZES[int(g[kp])]
            mid = EXPANSION_RATIOS[int(g[ep])] * c_in
            stride = 2 if (layer == 0 and backbone.block_strides[b]) else 1
            out_size = _conv_out(size, stride)
            name = f"block{b + 1}.layer{layer + 1}"
            rows.append({"name": name + ".expand", "madds": size * size * c_in * mid, "params": c_in * mid})
            rows.append({"name": name + ".depthwise", "madds": out_size * out_size * k * k * mid, "params": k * k * mid})
            rows.append({"name": name + ".project", "madds": out_size * out_size * mid * c_out, "params": mid * c_out})
            size = out_size
            c_in = c_out
    h = backbone.head_channels
    rows.append({"name": "head", "madds": size * size * c_in * h, "params": c_in * h})
    rows.append({"name": "classifier", "madds": h * backbone.n_classes, "params": h * backbone.n_classes + backbone.n_classes})
    return rows


def n_layers(genome: Sequence[int]) -> int:
    g = np.asarray(genome)
    return int(sum(g[depth_position(b)] for b in range(N_BLOCKS)))


def complexity(
    genome: Sequence[int],
    backbone: BackboneSpec = BackboneSpec(),
    latency: LatencyModel = LatencyModel(),
) -> ComplexityVector:
    rows = layer_table(genome, backbone)
    madds = float(sum(r["madds"] for r in rows))
    params = float(sum(r["params"] for r in rows))
    layers = n_layers(genome)
    return ComplexityVector(
        madds=madds,
        params=params,
        latency_cpu=latency.cpu_per_madd * madds + latency.cpu_per_layer * layers,
        latency_gpu=latency.gpu_per_madd * madds + latency.gpu_per_layer * layers,
    )


def complexity_batch(
    genomes: np.ndarray,
    backbone: BackboneSpec = BackboneSpec(),
    latency: LatencyModel = LatencyModel(),
) -> np.ndarray:
    """Vectorized :func:`complexity` for canonical genomes.

    Returns an (n, 4) array with columns ordered as ``COMPLEXITY_NAMES``.
    """
    g = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
    kernel = np.array([0, 3, 5, 7])
    expansion = np.array([0, 3, 4, 6])
    res = 192 + 4 * g[:, 0]
    size = -(-res // 2)
    c_in = backbone.stem_channels
    madds = size * size * 27.0 * c_in
    params = np.full(len(g), 27.0 * c_in)
    for b in range(N_BLOCKS):
        c_out = backbone.block_channels[b]
        depth = g[:, depth_position(b)]
        for layer in range(MAX_LAYERS):
            kp, ep = slot_positions(b, layer)
            active = layer < depth
            k = kernel[g[:, kp]]
            mid = expansion[g[:, ep]] * c_in
            stride = 2 if (layer == 0 and backbone.block_strides[b]) else 1
            out_size = -(-size // stride)
            m = size * size * c_in * mid + out_size * out_size * mid * (k * k + c_out)
            p = mid * (c_in + k * k + c_out)
            madds = madds + np.where(active, m, 0)
            params = params + np.where(active, p, 0)
            size = out_size
            c_in = c_out
    h = backbone.head_channels
    madds = madds + size * size * c_in * h + h * backbone.n_classes
    params = params + c_in * h + h * backbone.n_classes + backbone.n_classes
    layers = sum(g[:, depth_position(b)] for b in range(N_BLOCKS))
    return np.column_stack([
        madds,
        params,
        latency.cpu_per_madd * madds + latency.cpu_per_layer * layers,
        latency.gpu_per_madd * madds + latency.gpu_per_layer * layers,
    ]).astype(float)


class ComplexityCalculator:
    """Batch complexity objectives selected by name."""

    def __init__(self, backbone: BackboneSpec = BackboneSpec(), latency: LatencyModel = LatencyModel()):
        self.backbone = backbone
        self.latency = latency

    def __call__(self, genome: Sequence[int]) -> ComplexityVector:
        return complexity(genome, self.backbone, self.latency)

    def matrix(self, genomes: np.ndarray, names: Sequence[str]) -> np.ndarray:
        full = complexity_batch(genomes, self.backbone, self.latency)
        cols = [COMPLEXITY_NAMES.index(n) for n in names]
        return full[:, cols]


def load_backbone_config(path) -> tuple[BackboneSpec, LatencyModel]:
    """Read ``{"backbone": {...}, "latency": {...}}`` from a JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    return backbone_from_dict(data.get("backbone", {})), latency_from_dict(data.get("latency", {}))


def backbone_from_dict(d: dict) -> BackboneSpec:
    d = dict(d)
    for key in ("block_channels", "block_strides"):
        if key in d:
            d[key] = tuple(d[key])
    return BackboneSpec(**d)


def latency_from_dict(d: dict) -> LatencyModel:
    return LatencyModel(**d)
