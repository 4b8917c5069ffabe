# vortflow Test Suite 