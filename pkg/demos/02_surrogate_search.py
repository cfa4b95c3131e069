# A complete desk-scale search run against the surrogate fitness.
#
# The surrogate rewards exactly 8 skip layers, 3 pools, and f2 >= f1 in
# every skip gene (maximum 1.0), so the search has to balance depth
# control against parameter-level tuning - a miniature of the real
# architecture-search problem that runs in well under a second.

from evoarch import EvolutionConfig, run, surrogate_fitness

config = EvolutionConfig(rng_seed=7)  # defaults: population 20, 20 generations
result = run(config)

print("generation | best    | mean    | cache hits/misses")
for record in result.history.records:
    print(
        f"{record.generation:10d} | {record.best_fitness:.5f} | "
        f"{record.mean_fitness:.5f} | {record.cache_hits}/{record.cache_misses}"
    )

best = result.best
skips = sum(1 for g in best.genome if hasattr(g, "f1"))
print(f"\nbest genome ({len(best.genome)} genes, {skips} skips):")
print(" ", " - ".join(
    f"S({g.f1},{g.f2})" if hasattr(g, "f1") else f"P({g.pool_type.value})" for g in best.genome
))
print("fitness:", best.fitness)
assert best.fitness == surrogate_fitness(best.genome)

# Elitism guarantees the best-so-far never regresses:
trace = result.history.best_fitness_trace()
assert all(b >= a for a, b in zip(trace, trace[1:]))
print("best-fitness trace is non-decreasing across all generations")

# The cache is why later generations get cheaper: re-encountered
# architectures (surviving parents, rediscovered offspring) cost nothing.
total_evals = len(result.cache.entries)
total_lookups = sum(r.cache_hits + r.cache_misses for r in result.history.records)
print(f"{total_lookups} fitness lookups were served by {total_evals} unique evaluations")
