from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError


def _parse_int_tuple(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(int(part) for part in value.replace(" ", "").split(",") if part)
    return value


class CACAConfig(BaseModel):
    """Parâmetros da atenção cruzada consciente de colunas."""

    model_config = ConfigDict(frozen=True)

    sigma: float = Field(default=5.0, gt=0, description="Taxa de decaimento do viés gaussiano por coluna")
    heads: int = Field(default=4, ge=1)
    channels: int = Field(default=64, ge=1)
    use_column_bias: bool = True

    @model_validator(mode="after")
    def _channels_split_into_heads(self) -> "CACAConfig":
        if self.channels % self.heads:
            raise ValueError(f"channels={self.channels} not divisible by heads={self.heads}")
        return self

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads


class PhantomSpec(BaseModel):
    """Descrição do fantoma semiesférico sintético."""

    grid_size: int = Field(default=32, ge=1)
    radius: float = Field(default=11.0, gt=0)
    blob_count: int = Field(default=6, ge=0)
    base_intensity: float = Field(default=0.3, gt=0)
    blob_intensity: Tuple[float, float] = (0.2, 0.8)
    blob_sigma: Tuple[float, float] = (1.0, 3.0)
    seed: int = 0

    @field_validator("blob_intensity", "blob_sigma")
    @classmethod
    def _positive_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if low <= 0 or high < low:
            raise ValueError(f"invalid range {value}")
        return value


class UNetConfig(BaseModel):
    """Arquitetura do denoiser condicional."""

    model_config = ConfigDict(frozen=True)

    image_size: int = Field(default=32, ge=1)
    latent_channels: int = Field(default=1, ge=1)
    base_channels: int = Field(default=32, ge=1)
    channel_mult: Tuple[int, ...] = (1, 2, 4)
    attention_levels: Tuple[int, ...] = (1, 2)
    groups: int = Field(default=8, ge=1)
    heads: int = Field(default=4, ge=1)
    sigma: float = Field(default=5.0, gt=0)
    depth_slabs: int = Field(default=4, ge=1)
    refine_channels: int = Field(default=8, ge=1)
    use_caca: bool = True
    use_im3d: bool = True
    seed: int = 0

    @field_validator("channel_mult", "attention_levels", mode="before")
    @classmethod
    def _split_tuples(cls, value: Any) -> Any:
        return _parse_int_tuple(value)

    @model_validator(mode="after")
    def _check_shapes(self) -> "UNetConfig":
        levels = len(self.channel_mult)
        if levels < 1:
            raise ValueError("channel_mult must list at least one level")
        if self.image_size % (2 ** (levels - 1)):
            raise ValueError(f"image_size={self.image_size} not divisible by 2^{levels - 1}")
        for width in self.widths:
            if width % self.groups:
                raise ValueError(f"channel width {width} not divisible by groups={self.groups}")
            if width % self.heads:
                raise ValueError(f"channel width {width} not divisible by heads={self.heads}")
        for level in self.attention_levels:
            if not 0 <= level < levels:
                raise ValueError(f"attention level {level} outside 0..{levels - 1}")
            if self.resolution(level) % self.depth_slabs:
                raise ValueError(
                    f"resolution {self.resolution(level)} of level {level} not divisible by depth_slabs={self.depth_slabs}"
                )
        return self

    @property
    def widths(self) -> Tuple[int, ...]:
        return tuple(self.base_channels * mult for mult in self.channel_mult)

    @property
    def emb_dim(self) -> int:
        return 4 * self.base_channels

    def resolution(self, level: int) -> int:
        return self.image_size // (2**level)


class RunConfig(BaseModel):
    """Todos os ajustes de um experimento; validado ao carregar, chaves desconhecidas rejeitadas."""

    model_config = ConfigDict(extra="forbid")

    timesteps: int = Field(default=200, ge=1)
    beta_start: float = Field(default=8.5e-4, gt=0, lt=1)
    beta_end: float = Field(default=0.012, gt=0, lt=1)
    sigma: float = Field(default=5.0, gt=0)
    mask_prob: float = Field(default=0.1, ge=0, le=1)
    guidance_scale: float = 3.0
    sampling_steps: int = Field(default=50, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    warmup_steps: int = Field(default=100, ge=0)
    lr_final_factor: float = Field(default=1.0, ge=0)
    batch_size: int = Field(default=16, ge=2)
    image_size: int = Field(default=32, ge=1)
    seed: int = 0
    base_channels: int = Field(default=32, ge=1)
    channel_mult: Tuple[int, ...] = (1, 2, 4)
    attention_levels: Tuple[int, ...] = (1, 2)
    groups: int = Field(default=8, ge=1)
    heads: int = Field(default=4, ge=1)
    depth_slabs: int = Field(default=4, ge=1)
    refine_channels: int = Field(default=8, ge=1)
    use_caca: bool = True
    use_im3d: bool = True
    volume_source: Literal["reference+target", "reference"] = "reference+target"
    log_every: int = Field(default=50, ge=1)
    p_lo: float = Field(default=1.0, ge=0, le=100)
    p_hi: float = Field(default=99.0, ge=0, le=100)

    @field_validator("channel_mult", "attention_levels", mode="before")
    @classmethod
    def _split_tuples(cls, value: Any) -> Any:
        return _parse_int_tuple(value)

    @model_validator(mode="after")
    def _check_ranges(self) -> "RunConfig":
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        if self.p_lo >= self.p_hi:
            raise ValueError("p_lo must be below p_hi")
        if self.sampling_steps > self.timesteps:
            raise ValueError("sampling_steps must not exceed timesteps")
        self.unet_config()
        return self

    def unet_config(self, seed: Optional[int] = None) -> UNetConfig:
        return UNetConfig(
            image_size=self.image_size,
            base_channels=self.base_channels,
            channel_mult=self.channel_mult,
            attention_levels=self.attention_levels,
            groups=self.groups,
            heads=self.heads,
            sigma=self.sigma,
            depth_slabs=self.depth_slabs,
            refine_channels=self.refine_channels,
            use_caca=self.use_caca,
            use_im3d=self.use_im3d,
            seed=self.seed if seed is None else seed,
        )

    # ------------------------------------------------------------------ #
    #  Arquivo ``chave = valor``                                          #
    # ------------------------------------------------------------------ #

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values: Dict[str, str] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {number}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in values:
                raise ConfigError(f"line {number}: duplicate key {key!r}")
            values[key] = value
        try:
            return cls.model_validate(values)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: Optional[Path]) -> "RunConfig":
        if path is None:
            return cls()
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = ["# CA3D run configuration"]
        for key, value in self.model_dump().items():
            if isinstance(value, (tuple, list)):
                rendered = ",".join(str(item) for item in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{key} = {rendered}")
        return "\n".join(lines) + "\n"

