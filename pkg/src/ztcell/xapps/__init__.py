"""Zero-trust microservices hosted on the near-RT RIC."""
