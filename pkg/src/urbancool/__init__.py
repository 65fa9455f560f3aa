"""Urban microclimate, comfort and cooling-load engine with an auditable orchestration layer."""
import warnings

# numba probes TBB before falling back to another threading layer; the probe's
# version warning is noise for us.
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

__version__ = "0.1.0"
