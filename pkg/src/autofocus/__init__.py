"""Auto-focus transformer for question answering over synthetic sports episodes."""
