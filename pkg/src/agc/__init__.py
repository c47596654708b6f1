"""P systems, graph-molecule reactors and their membrane combination."""

from .analysis import (
    OrgLevel,
    extract_network,
    is_closed,
    is_self_maintaining,
    order_parameter,
    organization_level,
    species_series,
)
from .config import ChemistryDefinition, load_chemistry, parse_chemistry, run_chemistry, write_chemistry
from .engine import AgcSystem, agc_step, run_agc
from .membrane import MembraneStructure, canonical_text, parse_membrane, structurally_equivalent
from .molecule import Molecule, canonical_species_id, cool, heat, isomorphic, parse_molecule
from .multiset import Multiset
from .psystem import PSystem, classify_system, maximal_parallel_step, parse_evolution_rule, run_psystem
from .reaction import ReactionRule, parse_reaction_rule, react
from .reactor import Params, ReactorState, reactor_step, run_reactor
from .trace import Trace, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "OrgLevel",
    "extract_network",
    "is_closed",
    "is_self_maintaining",
    "order_parameter",
    "organization_level",
    "species_series",
    "ChemistryDefinition",
    "load_chemistry",
    "parse_chemistry",
    "run_chemistry",
    "write_chemistry",
    "AgcSystem",
    "agc_step",
    "run_agc",
    "MembraneStructure",
    "canonical_text",
    "parse_membrane",
    "structurally_equivalent",
    "Molecule",
    "canonical_species_id",
    "cool",
    "heat",
    "isomorphic",
    "parse_molecule",
    "Multiset",
    "PSystem",
    "classify_system",
    "maximal_parallel_step",
    "parse_evolution_rule",
    "run_psystem",
    "ReactionRule",
    "parse_reaction_rule",
    "react",
    "Params",
    "ReactorState",
    "reactor_step",
    "run_reactor",
    "Trace",
    "read_trace",
    "write_trace",
]
