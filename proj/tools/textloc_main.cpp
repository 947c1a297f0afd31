#include <iostream>

int main() {
  std::cout << "textloc: commands not wired up yet\n";
  return 1;
}
