"""Task-tailored convolutional compression operators and a benchmark harness."""
