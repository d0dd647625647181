# Models module for resonator analysis
