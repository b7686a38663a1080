"""edgemap: synthesizes chip power/PDN/pad testcases, computes golden
temperature and IR-drop maps with built-in sparse solvers, and trains
encoder-decoder networks that predict those maps from the inputs."""

__version__ = "0.1.0"
