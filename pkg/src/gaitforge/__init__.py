"""Speed-adaptive walking agent toolkit."""
