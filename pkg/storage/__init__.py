# Storage module for trace, result and reference files
