#pragma once

#include <random>
#include <string>

// Deterministic training-script-like Python source.
inline std::string synthetic_module(std::uint64_t seed, int functions) {
  static const char* words[] = {"model", "loss", "batch", "optimizer", "hidden", "logits", "grad", "epoch",
                                "loader", "accuracy", "weights", "shape", "dropout", "scheduler"};
  std::mt19937_64 rng(seed);
  auto w = [&] { return std::string(words[rng() % 14]); };
  std::string s = "import numpy as np\n\n";
  for (int f = 0; f < functions; ++f) {
    s += "def " + w() + "_" + std::to_string(f) + "(" + w() + ", " + w() + "):\n";
    if (rng() % 3 == 0) {
      s += "    for epoch in range(10):\n";
      s += "        for batch in loader:\n";
      s += "            logits = model(batch)\n";
      s += "            loss = criterion(logits, batch)\n";
      s += "            loss.backward()\n";
      s += "            optimizer.step()\n";
    }
    for (int l = 0, n = 3 + static_cast<int>(rng() % 8); l < n; ++l)
      s += "    " + w() + " = np." + w() + "(" + w() + ", " + std::to_string(rng() % 100) + ")\n";
    s += "    return " + w() + "\n\n";
  }
  return s;
}
