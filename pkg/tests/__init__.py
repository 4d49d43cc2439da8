"""Tests for BTCBuzzBot.""" 