"""Plot the CSV tables written by `tlmodel figures ...`.

Usage: python docs/plot_figures.py <kind> <file.csv>
kind is one of pdf, smile, sigma-ln, zeros, arrears.
"""

import sys

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

kind, path = sys.argv[1], sys.argv[2]
df = pd.read_csv(path)
fig, ax = plt.subplots()

if kind == "pdf":
    ax.plot(df["L"], df["density"])
    ax.set_xlabel("L")
    ax.set_ylabel("density")
elif kind == "smile":
    ax.plot(df["K"], df["sigma_BS"], marker="o")
    ax.set_xlabel("strike")
    ax.set_ylabel("Black vol")
elif kind == "sigma-ln":
    ax.plot(df["psi"], df["sigma_ln"], label="sigma_ln")
    ax.plot(df["psi"], df["sigma_bs_atm"], "--", label="ATM Black vol")
    ax.set_xlabel("psi")
    ax.legend()
elif kind == "zeros":
    # extended-precision columns parse fine as doubles for plotting
    for psi, g in df.groupby("psi"):
        ax.scatter(g["re"].astype(float), g["im"].astype(float), s=12, label=f"psi={psi}")
        theta = np.linspace(0, 2 * np.pi, 400)
        for col, style in (("circle1_radius", ":"), ("circle2_radius", "--")):
            r = g[col].iloc[0]
            ax.plot(r * np.cos(theta), r * np.sin(theta), style, lw=0.7)
    ax.set_aspect("equal")
    ax.legend()
elif kind == "arrears":
    ax.plot(df["psi"], df["sigma_LN"])
    ax.set_xlabel("psi")
    ax.set_ylabel("equivalent log-normal vol")
else:
    sys.exit(f"unknown kind {kind}")

out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
