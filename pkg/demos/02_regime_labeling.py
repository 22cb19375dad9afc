"""From raw closes to Bullish / Bearish / Other training targets.

Two independent axes are fitted: a two-state switching model on returns
gives low vs high variance, and the adaptive-average crossing rule gives
bull vs bear. Their product is four states; the labeling rules collapse
those into the three trading targets, extending each calm up-trend through
the following volatile top (and each volatile sell-off through the calm
bottom), then discarding episodes too small to pay their own trading cost.

Run with: python demos/02_regime_labeling.py
"""

from collections import Counter

import numpy as np

from regimecast.regime import generate_labels, segment_regimes
from regimecast.synthetic import make_trend_prices

prices = make_trend_prices(900, seed=10)
seg, model = segment_regimes(prices)

print("fitted switching model")
print(f"  sigma (daily): LV {np.sqrt(model.sigma2[0]):.4f}  "
      f"HV {np.sqrt(model.sigma2[1]):.4f}")
print(f"  persistence: LV {model.transition[0, 0]:.3f}  HV {model.transition[1, 1]:.3f}")
print(f"  log-likelihood {model.log_likelihood:.1f} after {model.n_iter} EM steps")

print("\nfour-state day counts:", dict(Counter(seg.four_state)))

# labels without and with the cost screen (0.40% round trip, equities-like)
free = generate_labels(seg, prices, roundtrip_cost=0.0).copy()
costed = generate_labels(seg, prices, roundtrip_cost=0.004)
print("label counts, no cost screen:  ", dict(Counter(free)))
print("label counts, 0.40% round trip:", dict(Counter(costed)))
dropped = int(np.sum((free != "Other") & (costed == "Other")))
print(f"{dropped} days belonged to episodes too small to cover the cost")

# a compressed view of one stretch: state letter + label letter per day
codes = {"LV-bull": "b", "LV-bear": "l", "HV-bull": "B", "HV-bear": "L"}
lab = {"Bullish": "+", "Bearish": "-", "Other": "."}
a, b = 200, 280
print(f"\ndays {a}..{b} (state row: b/B bull calm/vol, l/L bear calm/vol)")
print("state:", "".join(codes[s] for s in seg.four_state[a:b]))
print("label:", "".join(lab[s] for s in costed[a:b]))

# the extension rule in action: count labeled days sitting on extension states
ext_up = int(np.sum((free == "Bullish") & (seg.four_state == "HV-bull")))
ext_dn = int(np.sum((free == "Bearish") & (seg.four_state == "LV-bear")))
print(f"\nextension days before the cost screen: {ext_up} bullish tops, "
      f"{ext_dn} bearish bottoms")
