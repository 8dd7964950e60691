"""Wei/ETH unit helpers.

Payments and bids are carried as integer wei everywhere; conversion to
decimal ETH happens only when writing reports.
"""

from __future__ import annotations

WEI_PER_ETH = 10**18


def wei_to_eth(wei: float | int) -> float:
    return wei / WEI_PER_ETH


def eth_to_wei(eth: float) -> int:
    return round(eth * WEI_PER_ETH)
