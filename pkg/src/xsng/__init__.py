"""xsng: desk-scale cross-lingual singing-voice acoustic model.

The package is organized around seven pieces: a tape-based autodiff
core (autodiff), a score-to-phoneme frontend with a unified symbol
inventory (frontend), the acoustic generator (generator), an
adversarial singer-identity branch (eliminator), multi-band mel
discriminators (discriminator), the training harness (training), and a
command-line entry point (cli).
"""

__version__ = "0.1.0"
