"""Reference bands for the latent-analysis and activation-clustering tests.

Independent of latsep: numpy draws and scikit-learn estimators. Prints the
ranges quoted in tests/unit/test_cleansers.cpp and tests/unit/test_latent.cpp.

    python3 tests/oracles/latent_oracles.py
"""

import numpy as np
from sklearn.cluster import KMeans
from sklearn.decomposition import PCA
from sklearn.metrics import silhouette_score
from sklearn.svm import SVC


def ac_silhouette(x, seed):
    z = PCA(10).fit_transform(x)
    km = KMeans(2, n_init=10, random_state=seed).fit(z)
    return silhouette_score(z, km.labels_), np.bincount(km.labels_).min()


def homogeneous_ac(trials=20):
    sil = [ac_silhouette(np.random.default_rng(s).standard_normal((1050, 64)), s)[0] for s in range(trials)]
    print(f"activation clustering, single N(0, I64), n=1050: silhouette in [{min(sil):.3f}, {max(sil):.3f}]")


def planted_ac(trials=10):
    out = []
    for s in range(trials):
        r = np.random.default_rng(s)
        u = r.standard_normal(64)
        u /= np.linalg.norm(u)
        x = np.vstack([r.standard_normal((1000, 64)), r.standard_normal((50, 64)) + 10 * u])
        out.append(ac_silhouette(x, s))
    sil = [o[0] for o in out]
    small = [int(o[1]) for o in out]
    print(f"activation clustering, 50 rows at 10 sigma: silhouette in [{min(sil):.3f}, {max(sil):.3f}], "
          f"smaller cluster sizes {sorted(set(small))}")


def random_label_svm(trials=30):
    for d in (2, 4, 8, 16, 32, 64):
        acc = []
        for s in range(trials):
            r = np.random.default_rng(s)
            x = r.standard_normal((200, d))
            y = r.integers(0, 2, 200)
            acc.append(SVC(kernel="linear", C=100).fit(x, y).score(x, y))
        print(f"linear SVC C=100, random labels, n=200, dim {d}: train accuracy in [{min(acc):.3f}, {max(acc):.3f}]")


if __name__ == "__main__":
    homogeneous_ac()
    planted_ac()
    random_label_svm()
