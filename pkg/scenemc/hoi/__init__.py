"""Human-object interaction priors."""
