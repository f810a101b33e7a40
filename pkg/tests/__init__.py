# Tests for cepstral CCA
