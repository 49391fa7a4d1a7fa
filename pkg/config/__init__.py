"""Constants, status codes and scenario files."""
