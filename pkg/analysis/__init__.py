# Analysis module for resonator characterization
