"""
Base Models
Shared model configuration and money helpers
"""
from decimal import Decimal, ROUND_HALF_EVEN
from typing import Annotated, Any, Union
from pydantic import BaseModel, BeforeValidator, ConfigDict

# Money is fixed-point with 6 fractional digits; reports render 4.
MONEY_QUANTUM = Decimal('0.000001')
DISPLAY_QUANTUM = Decimal('0.0001')
ZERO_MONEY = Decimal('0.000000')


def to_money(value: Union[Decimal, int, str, float]) -> Decimal:
    """
    Quantize a value to the internal money precision

    Args:
        value: Amount (floats go through their repr to avoid binary noise)

    Returns:
        Decimal: Amount with 6 fractional digits
    """
    if not isinstance(value, Decimal):
        value = Decimal(str(value))
    return value.quantize(MONEY_QUANTUM, rounding=ROUND_HALF_EVEN)


def _float_via_str(value: Any) -> Any:
    if isinstance(value, float):
        return Decimal(str(value))
    return value


# Decimal that accepts YAML/JSON floats without binary noise (0.55 stays 0.55)
ExactDecimal = Annotated[Decimal, BeforeValidator(_float_via_str)]


def format_money(value: Decimal) -> str:
    """Render money for humans, e.g. $0.0003"""
    return f"${value.quantize(DISPLAY_QUANTUM, rounding=ROUND_HALF_EVEN)}"


class DomainModel(BaseModel):
    """Base for mutable domain models"""
    model_config = ConfigDict(extra='forbid', validate_assignment=True)


class FrozenModel(BaseModel):
    """Base for immutable records (trace lines, parsed responses)"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    def dump(self) -> dict[str, Any]:
        """JSON-compatible dict (decimals as strings)"""
        return self.model_dump(mode='json')
