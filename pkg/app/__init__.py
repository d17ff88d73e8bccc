"""
hsan-reviews: multiple-instance review classification with segment attention.

The command-line entry point is app.main.main.
"""
