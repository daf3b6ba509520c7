"""
Pydantic schemas for the nested U-structure network.

Serialized key names follow the documented config file format
(`num_classes`, `stages[*].depth/in/mid/out/dilated/dilation_rates`,
`decoder[*]`, `normalization`, `input_divisor`). Attribute names are the
long forms (`in_channels`, `stage_configs`, ...); both are accepted on input.

Field-level constraints (positive channel counts, depth >= 2) are enforced
here. Cross-field invariants (channel chaining, rate lists, level counts)
are checked by `src.model.network.validate_config` so every violation is
reported at once instead of failing on the first one.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


BlockKind = Literal["rsu", "resunet", "resunetpp"]
Normalization = Literal["instance", "batch"]


class RSUConfig(BaseModel):
    """One U-shaped block: an RSU, a residual-U stage or the nested-U++ starting unit."""

    model_config = ConfigDict(populate_by_name=True)

    block: BlockKind = Field(
        "rsu",
        description="rsu = conv units; resunet = residual basic-block units; resunetpp = dense-skip nested U with residual units",
    )
    depth: int = Field(..., ge=2, description="Number of U levels")
    in_channels: int = Field(..., ge=1, alias="in")
    mid_channels: int = Field(..., ge=1, alias="mid")
    out_channels: int = Field(..., ge=1, alias="out")
    dilated: bool = Field(False, description="True selects the resolution-preserving RSU-4F variant")
    dilation_rates: List[int] = Field(
        default_factory=list,
        description="One rate per level when dilated; defaults to 1, 2, 4, ...",
    )
    negative_slope: float = Field(0.01, ge=0.0, description="LeakyReLU slope")

    @model_validator(mode="after")
    def _default_rates(self) -> "RSUConfig":
        if self.dilated and not self.dilation_rates:
            self.dilation_rates = [2 ** i for i in range(self.depth)]
        return self

    def problems(self, name: str = "block") -> List[str]:
        """Invariant violations for this block alone, as human-readable strings."""
        found: List[str] = []
        if not self.dilated:
            return found
        rates = self.dilation_rates
        if self.block != "rsu":
            found.append(f"{name}: only 'rsu' blocks can be dilated (got {self.block!r})")
        if len(rates) != self.depth:
            found.append(
                f"{name}: dilation_rates malformed, {len(rates)} entries for depth {self.depth}"
            )
        if rates and rates[0] != 1:
            found.append(f"{name}: dilation_rates malformed, first rate must be 1 (got {rates[0]})")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            found.append(f"{name}: dilation_rates malformed, rates must be strictly increasing {rates}")
        return found


class ModelConfig(BaseModel):
    """Full architecture description: six encoder levels, four decoder blocks, a task head."""

    model_config = ConfigDict(populate_by_name=True)

    num_classes: int = Field(..., ge=1, description="1 for binary, 4 for parts, 8 for type")
    stage_configs: List[RSUConfig] = Field(
        ...,
        alias="stages",
        description="Level 1 nested-U++ unit, levels 2-5 residual-U stages, level 6 dilated RSU-4F",
    )
    decoder_configs: List[RSUConfig] = Field(..., alias="decoder", description="Four RSU decoder blocks")
    downsample_factor: int = Field(2, description="Stride of every encoder transition")
    normalization: Normalization = Field("instance")
    input_divisor: int = Field(32, ge=1, description="Input H and W must be multiples of this")

    # Derived; filled in by validate_config.
    scales: Optional[List[float]] = Field(None, description="Spatial scale of each encoder level")

    def to_file_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True, exclude={"scales"})
