"""Good-deal and no-arbitrage pricing on finite event trees with
proportional transaction costs and dividend-paying securities."""

from .errors import ComputationError, PricerError, ValidationError
from .lattice import (
    AdaptedProcess,
    EventTree,
    NodeRef,
    conditional_expectation,
    derive_filtration,
    ensure_adapted,
    tail_sum,
)
from .market import (
    CashFlow,
    MarketModel,
    Security,
    TradingStrategy,
    apply_transaction_costs,
    asian_call,
    cds_dividends,
    discount_factors,
    is_self_financing,
    make_self_financing,
    wealth_closed_form,
    wealth_process,
)
from .cone import (
    ArbitrageWitness,
    ConeGenerator,
    GeneratorSet,
    StoppingProfile,
    arbitrage_check,
    generator_strategy,
    generators_for,
    stopping_profiles,
)
from .acceptability import (
    DensityBand,
    correspondence_check,
    dglr_eval,
    index_level,
    rho_gamma,
)
from .pricing import (
    NgdResult,
    PriceQuote,
    forward_prices,
    good_deal_certificate,
    good_deal_prices,
    liquidity_surface,
    ngd_check,
    noarb_bounds,
    primal_price_oracle,
)

__version__ = "0.1.0"
