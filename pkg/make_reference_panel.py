import sys

from simreg.data import write_genotypes
from simreg.reference_panel import reference_panel

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "reference_panel.tsv"
    panel = reference_panel()
    write_genotypes(panel, out)
    print(f"Wrote {panel.n} subjects x {panel.n_snps} SNPs to {out}")
    for snp, maf in zip(panel.snp_ids, panel.maf):
        print(f"  {snp}\tMAF={maf:.3f}")
