"""Why autocorrelated noise fools correlation screens.

Independent random walks of century length routinely correlate at |r| > 0.5,
while independent white-noise pairs stay near +-2/sqrt(n).
"""
import numpy as np

from proxyrecon.nullmodels import spurious_corr_experiment

n = 149
rw = spurious_corr_experiment(n, 1000, seed=1)
wn = spurious_corr_experiment(n, 1000, seed=2, kind="white")
print(f"white noise pairs : sd(r) = {wn.std():.3f}   (1/sqrt(n-1) = {1 / np.sqrt(n - 1):.3f})")
print(f"random walk pairs : sd(r) = {rw.std():.3f}")
print(f"share of random-walk pairs with |r| > 0.5: {np.mean(np.abs(rw) > 0.5):.0%}")
