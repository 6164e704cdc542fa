"""Positive-sequence transmission grid and its frequency dynamics."""
from .dynamics import Event, IntegrationError, LastSourceTrip, TransmissionDae, coi_frequency, measure_frequency
from .network import (
    Boundary,
    Bus,
    Generator,
    Governor,
    Grid,
    GridError,
    Islanded,
    Line,
    PowerFlowError,
    PowerFlowResult,
    solve_power_flow,
)
