"""devogrid: neuroevolution of grid-cell controllers whose chemical-exchange
dynamics settle into fixed points matching target grayscale patterns."""

from .growth import GrowthConfig, GrowthResult, Organism, init_organism
from .harness import (BatchResult, HealingReport, RunConfig, RunRecord, export_csv,
                      run_batch, run_evolution, self_healing_experiment, snapshot_growth)
from .neat import (Genome, InnovationRegistry, NeatConfig, Species,
                   compatibility_distance, crossover, genome_from_text, genome_to_text,
                   init_population, mutate_add_link, mutate_add_node, mutate_toggle,
                   mutate_weights, reproduce, run_neat, speciate)
from .network import Network, compile_genome, sigmoid
from .patterns import (GrayImage, ModelVariant, VARIANTS, discretize, evaluate,
                       make_target, parse_variant, read_pgm, similarity, write_pgm)

__version__ = "0.1.0"
