"""One hand-made observation per data class, and what each solver does with it.

    python3 demos/data_classes.py
"""

from __future__ import annotations

from losstomo import LossTomographyError, NodeStats, classify_node, estimate_node


def stats(children, counts, n):
    return NodeStats.from_pattern_counts("k", tuple(children), {tuple(k): v for k, v in counts.items()}, n=n)


CASES = [
    ("every pair and the full set overlap", stats("ab", {"ab": 25, "a": 25, "b": 15}, 100)),
    ("a-b and b-c overlap, a and c never do", stats("abc", {"ab": 40, "bc": 30, "a": 110, "b": 130, "c": 95}, 1000)),
    ("two disjoint pairs", stats("abcd", {"ab": 100, "a": 200, "b": 150, "cd": 80, "c": 120, "d": 160}, 1000)),
    ("a chain next to a pair, plus a loner", stats("abcdef", {"ab": 20, "bc": 20, "de": 10, "a": 30, "f": 5}, 200)),
    ("nobody ever sees a probe together", stats("abc", {"a": 5, "b": 3, "c": 1}, 20)),
]


def main() -> None:
    for title, s in CASES:
        cls = classify_node(s)
        print(f"{title}")
        comps = " ".join("{" + ",".join(c) + "}" for c in cls.partition.components)
        print(f"  class {cls.data_class}, components {comps}")
        if cls.missing.subsets:
            terms = sorted("{" + ",".join(sorted(t)) + "}" for t in cls.missing.subsets)
            print(f"  removed terms {' '.join(terms)}")
        try:
            est = estimate_node(s)
        except LossTomographyError as exc:
            print(f"  no estimate: {exc}\n")
            continue
        print(f"  A_hat = {est.A_hat:.4f} by {est.method}, observed rate {s.gamma_hat:.3f}")
        if est.stripped_singletons:
            print(f"  dropped single descendants {', '.join(est.stripped_singletons)}")
        if "exact_root" in est.diagnostics:
            d = est.diagnostics
            print(f"  closed form {d['closed_form']:.4f}, exact root {d['exact_root']:.4f}, "
                  f"pooled maximizer {d['pooled_partition_mle']:.4f}")
        if est.flags:
            print(f"  flags: {', '.join(est.flags)}")
        print()


if __name__ == "__main__":
    main()
