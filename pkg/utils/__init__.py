# Utilities module for resonator analysis
